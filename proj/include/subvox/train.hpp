#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "subvox/adam.hpp"
#include "subvox/augment.hpp"
#include "subvox/checkpoint.hpp"
#include "subvox/loss.hpp"
#include "subvox/net.hpp"
#include "subvox/pipeline.hpp"
#include "subvox/threads.hpp"

namespace subvox {

struct TrainConfig {
  int epochs = 40;
  double lr = 0.001;
  int groups_per_batch = 40;
  std::uint64_t seed = 1234;
  double val_fraction = 0.1;
  bool augment_enabled = true;
  AugmentConfig augment;
  LossWeights loss_weights;
  InputNormalization normalization;
  int threads = 0;
  bool verbose = true;
};

struct EpochLog {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_mu = 0.0;
  double loss_sigma_weighted = 0.0;  // lambda excluded
  double val_abs_re_pct = 0.0;       // mean over heads
  std::array<double, 2> val_abs_re_head_pct{0.0, 0.0};
};

struct TrainResult {
  Network<float> net;
  CheckpointMeta meta;
  std::vector<EpochLog> log;
  int best_epoch = -1;
};

namespace traindetail {

struct GroupIndex {
  std::int64_t model_id = 0;
  std::size_t first_patch = 0;  // index into dataset.patches
};

// Contiguous, complete replica groups; anything else is a configuration
// error because the precision term needs intact groups.
inline std::vector<GroupIndex> index_groups(const Dataset& ds) {
  if (ds.m_replicas < 1) throw std::invalid_argument("train: m_replicas must be >= 1");
  if (ds.patches.empty() || ds.patches.size() % static_cast<std::size_t>(ds.m_replicas) != 0)
    throw std::invalid_argument("train: group size mismatch");
  std::vector<GroupIndex> groups;
  for (std::size_t i = 0; i < ds.patches.size(); i += static_cast<std::size_t>(ds.m_replicas)) {
    const std::int64_t id = ds.patches[i].model_id;
    for (int j = 0; j < ds.m_replicas; ++j) {
      const LabeledPatch& p = ds.patches[i + static_cast<std::size_t>(j)];
      if (p.model_id != id) throw std::invalid_argument("train: group size mismatch");
      if (p.label_lumen_mm != ds.patches[i].label_lumen_mm ||
          p.label_wall_mm != ds.patches[i].label_wall_mm)
        throw std::invalid_argument("train: labels differ within a replica group");
    }
    groups.push_back({id, i});
  }
  return groups;
}

inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
}

inline void normalize_into(const ImageGrid& patch, const InputNormalization& norm,
                           std::vector<float>& out) {
  out.resize(patch.values.size());
  for (std::size_t i = 0; i < patch.values.size(); ++i)
    out[i] = static_cast<float>(norm.apply(patch.values[i]));
}

struct WorkerSlot {
  std::vector<NetActivations<float>> acts;  // one per replica
  NetScratch<float> scratch;
  NetGradients<float> grads;
  std::vector<float> input;
  std::vector<double> y, y_hat;
  double loss_mu = 0.0;
  double loss_sigma_weighted = 0.0;
};

}  // namespace traindetail

// Inference over a dataset; per-patch results are independent, so any
// worker count produces identical predictions.
inline std::vector<std::array<double, 2>> predict_all(const Network<float>& net,
                                                      const InputNormalization& norm,
                                                      const Dataset& ds, int threads = 0) {
  const int n_heads = net.cfg.outputs();
  std::vector<std::array<double, 2>> out(ds.patches.size(), {0.0, 0.0});
  const std::size_t n = ds.patches.size();
  const int n_workers = std::max<int>(1, std::min<int>(thread_count(threads), static_cast<int>(n)));
  std::vector<NetActivations<float>> acts(static_cast<std::size_t>(n_workers));
  std::vector<NetScratch<float>> scratch(static_cast<std::size_t>(n_workers));
  std::vector<std::vector<float>> inputs(static_cast<std::size_t>(n_workers));

  const std::size_t chunk = (n + static_cast<std::size_t>(n_workers) - 1) / n_workers;
  parallel_for(n_workers, n_workers, [&](std::int64_t w) {
    const std::size_t wi = static_cast<std::size_t>(w);
    const std::size_t lo = wi * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    for (std::size_t i = lo; i < hi; ++i) {
      traindetail::normalize_into(ds.patches[i].pixels, norm, inputs[wi]);
      const auto pred = forward(net, std::span<const float>(inputs[wi]), acts[wi], scratch[wi]);
      for (int h = 0; h < n_heads && h < 2; ++h)
        out[i][static_cast<std::size_t>(h)] = pred[static_cast<std::size_t>(h)];
    }
  });
  return out;
}

// Trains the regressor with whole replica groups per mini-batch. Per-group
// forward/backward runs in parallel; gradients are folded in group order, so
// a fixed seed reproduces the run for any worker count.
inline TrainResult train(const Dataset& ds, const NetworkConfig& cfg, const TrainConfig& tc) {
  using traindetail::GroupIndex;
  cfg.validate();
  if (cfg.outputs() != (ds.kind == StructureKind::airway ? 2 : 1))
    throw std::invalid_argument("train: output heads do not match dataset kind");
  const std::vector<GroupIndex> groups = traindetail::index_groups(ds);
  const int m = ds.m_replicas;
  const int n_heads = cfg.outputs();

  // Split at model granularity so no replica group is ever divided.
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(tc.seed, {static_cast<std::uint64_t>(Stage::split)});
  traindetail::shuffle_indices(order, split_rng);
  std::size_t n_val = static_cast<std::size_t>(tc.val_fraction * static_cast<double>(groups.size()));
  if (tc.val_fraction > 0.0 && n_val == 0) n_val = 1;
  if (n_val >= groups.size()) throw std::invalid_argument("train: validation split leaves no data");
  const std::vector<std::size_t> val_groups(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_groups(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  TrainResult result;
  result.net = Network<float>(cfg);
  result.net.init_weights(tc.seed);
  result.meta.kind = ds.kind;
  result.meta.normalization = tc.normalization;
  result.meta.train_seed = tc.seed;

  AdamState<float> adam(result.net);
  AdamParams adam_params;
  adam_params.lr = tc.lr;

  const int n_workers = thread_count(tc.threads);
  std::vector<traindetail::WorkerSlot> slots(static_cast<std::size_t>(n_workers));
  for (auto& s : slots) {
    s.acts.resize(static_cast<std::size_t>(m));
    s.grads = NetGradients<float>(cfg);
    s.scratch.prepare(cfg);
  }
  NetGradients<float> batch_grads(cfg);
  TransposedWeights<float> wt;

  Network<float> best_net = result.net;
  double best_val = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    Rng shuffle_rng(tc.seed, {static_cast<std::uint64_t>(Stage::shuffle), static_cast<std::uint64_t>(epoch)});
    traindetail::shuffle_indices(train_groups, shuffle_rng);

    double epoch_mu = 0.0, epoch_sigma_w = 0.0;
    int n_batches = 0;

    for (std::size_t batch_lo = 0; batch_lo < train_groups.size();
         batch_lo += static_cast<std::size_t>(tc.groups_per_batch)) {
      const std::size_t batch_hi =
          std::min(train_groups.size(), batch_lo + static_cast<std::size_t>(tc.groups_per_batch));
      const int n_batch_groups = static_cast<int>(batch_hi - batch_lo);
      const double inv_n = 1.0 / n_batch_groups;

      wt.rebuild(result.net);
      batch_grads.zero();
      double batch_mu = 0.0, batch_sigma_w = 0.0;

      ordered_parallel_reduce<traindetail::WorkerSlot>(
          n_batch_groups, tc.threads, slots,
          [&](int bi, traindetail::WorkerSlot& slot) {
            const GroupIndex& g = groups[train_groups[batch_lo + static_cast<std::size_t>(bi)]];
            slot.grads.zero();
            slot.y.assign(static_cast<std::size_t>(m) * n_heads, 0.0);
            slot.y_hat.assign(static_cast<std::size_t>(m) * n_heads, 0.0);
            for (int j = 0; j < m; ++j) {
              const LabeledPatch& p = ds.patches[g.first_patch + static_cast<std::size_t>(j)];
              ImageGrid pixels = p.pixels;
              if (tc.augment_enabled) {
                Rng arng(tc.seed, {static_cast<std::uint64_t>(Stage::augment),
                                   static_cast<std::uint64_t>(epoch),
                                   static_cast<std::uint64_t>(p.model_id),
                                   static_cast<std::uint64_t>(p.replica_id)});
                pixels = augment(pixels, tc.augment, arng);
              }
              traindetail::normalize_into(pixels, tc.normalization, slot.input);
              const auto pred = forward(result.net, std::span<const float>(slot.input),
                                        slot.acts[static_cast<std::size_t>(j)], slot.scratch);
              slot.y[static_cast<std::size_t>(j) * n_heads] = p.label_lumen_mm;
              slot.y_hat[static_cast<std::size_t>(j) * n_heads] = pred[0];
              if (n_heads == 2) {
                slot.y[static_cast<std::size_t>(j) * n_heads + 1] = p.label_wall_mm.value_or(0.0);
                slot.y_hat[static_cast<std::size_t>(j) * n_heads + 1] = pred[1];
              }
            }
            // The loss separates over groups, so the group's gradient is its
            // single-group gradient scaled by 1/N_batch.
            const std::vector<double> g_grad =
                loss_gradient(slot.y, slot.y_hat, m, ds.kind, tc.loss_weights);
            const LossReport g_rep = total_loss(slot.y, slot.y_hat, m, ds.kind, tc.loss_weights);
            slot.loss_mu = g_rep.mu;
            slot.loss_sigma_weighted = 0.0;
            for (double sw : g_rep.sigma_weighted) slot.loss_sigma_weighted += sw;
            std::vector<float> d_out(static_cast<std::size_t>(n_heads));
            for (int j = 0; j < m; ++j) {
              for (int h = 0; h < n_heads; ++h)
                d_out[static_cast<std::size_t>(h)] = static_cast<float>(
                    g_grad[static_cast<std::size_t>(j) * n_heads + static_cast<std::size_t>(h)] * inv_n);
              backward(result.net, wt, slot.acts[static_cast<std::size_t>(j)],
                       std::span<const float>(d_out), slot.grads, slot.scratch);
            }
          },
          [&](int, traindetail::WorkerSlot& slot) {
            batch_grads.add(slot.grads);
            batch_mu += slot.loss_mu * inv_n;
            batch_sigma_w += slot.loss_sigma_weighted * inv_n;
          });

      adam_step(result.net, batch_grads, adam, adam_params);
      epoch_mu += batch_mu;
      epoch_sigma_w += batch_sigma_w;
      ++n_batches;
    }

    EpochLog log;
    log.epoch = epoch;
    log.loss_mu = epoch_mu / std::max(1, n_batches);
    log.loss_sigma_weighted = epoch_sigma_w / std::max(1, n_batches);
    log.loss_total = log.loss_mu + tc.loss_weights.lambda * log.loss_sigma_weighted;

    // Validation RE with the current weights.
    double abs_re[2] = {0.0, 0.0};
    std::size_t n_val_patches = 0;
    {
      Dataset val;
      val.kind = ds.kind;
      val.m_replicas = m;
      for (std::size_t gi : val_groups)
        for (int j = 0; j < m; ++j)
          val.patches.push_back(ds.patches[groups[gi].first_patch + static_cast<std::size_t>(j)]);
      const auto preds = predict_all(result.net, tc.normalization, val, tc.threads);
      for (std::size_t i = 0; i < val.patches.size(); ++i) {
        const LabeledPatch& p = val.patches[i];
        abs_re[0] += std::abs(preds[i][0] - p.label_lumen_mm) / p.label_lumen_mm;
        if (n_heads == 2)
          abs_re[1] += std::abs(preds[i][1] - *p.label_wall_mm) / *p.label_wall_mm;
      }
      n_val_patches = val.patches.size();
    }
    for (int h = 0; h < n_heads; ++h)
      log.val_abs_re_head_pct[static_cast<std::size_t>(h)] =
          100.0 * abs_re[h] / static_cast<double>(n_val_patches);
    log.val_abs_re_pct = 0.0;
    for (int h = 0; h < n_heads; ++h)
      log.val_abs_re_pct += log.val_abs_re_head_pct[static_cast<std::size_t>(h)] / n_heads;
    result.log.push_back(log);

    if (log.val_abs_re_pct < best_val) {
      best_val = log.val_abs_re_pct;
      best_net = result.net;
      result.best_epoch = epoch;
    }
    if (tc.verbose) {
      std::printf("epoch %3d  L_mu %.5f  L_sigma_w %.6f  total %.5f  val |RE| %.2f%%%s\n",
                  epoch, log.loss_mu, log.loss_sigma_weighted, log.loss_total, log.val_abs_re_pct,
                  result.best_epoch == epoch ? "  *" : "");
      std::fflush(stdout);
    }
  }

  result.net = best_net;
  result.meta.trained_epochs = tc.epochs;
  result.meta.best_validation_abs_re_pct = best_val;
  return result;
}

}  // namespace subvox
