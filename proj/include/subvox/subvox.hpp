#pragma once

#include "subvox/adam.hpp"
#include "subvox/augment.hpp"
#include "subvox/checkpoint.hpp"
#include "subvox/classical.hpp"
#include "subvox/cnr.hpp"
#include "subvox/dataset_io.hpp"
#include "subvox/eval.hpp"
#include "subvox/geometry.hpp"
#include "subvox/image.hpp"
#include "subvox/loss.hpp"
#include "subvox/net.hpp"
#include "subvox/pipeline.hpp"
#include "subvox/profile.hpp"
#include "subvox/render.hpp"
#include "subvox/rng.hpp"
#include "subvox/sampling.hpp"
#include "subvox/threads.hpp"
#include "subvox/train.hpp"
