#pragma once

#include <memory>

#include "subvox/checkpoint.hpp"
#include "subvox/eval.hpp"
#include "subvox/train.hpp"

namespace subvox {

// Adapts a trained regressor to the dataset-measurer interface used by the
// comparison and sweep tooling.
inline DatasetMeasurer make_cnr_measurer(std::shared_ptr<LoadedCheckpoint> model, int threads = 0) {
  return [model, threads](const Dataset& ds) {
    if ((model->net.cfg.outputs() == 2) != (ds.kind == StructureKind::airway))
      throw std::invalid_argument("cnr measurer: model kind does not match dataset kind");
    const auto preds = predict_all(model->net, model->meta.normalization, ds, threads);
    std::vector<Estimate> out(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
      out[i].lumen_mm = preds[i][0];
      if (model->net.cfg.outputs() == 2) out[i].wall_mm = preds[i][1];
    }
    return out;
  };
}

}  // namespace subvox
