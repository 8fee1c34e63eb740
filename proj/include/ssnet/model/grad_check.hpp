#pragma once

#include <span>
#include <vector>

#include "ssnet/model/checkpoint.hpp"
#include "ssnet/model/subspectral.hpp"
#include "ssnet/nn/grad_check.hpp"

namespace ssnet::model {

// Checks the analytic gradient of the summed head loss computed by a model
// in precision T against finite differences of an f64 twin holding the same
// (T-rounded) weights and input. Dropout must be disabled in `cfg`;
// batchnorm runs on batch statistics, which is deterministic for a fixed batch.
template <typename T>
nn::GradCheckReport grad_check_model(const ModelConfig& cfg, const Tensor<double>& input,
                                     std::span<const int> labels, const std::vector<bool>& enabled,
                                     const nn::GradCheckOptions& opt, bool include_input = true) {
  if (cfg.dropout != 0.0) throw ConfigError("gradient checks need dropout disabled");
  auto model = build_model<T>(cfg);
  auto twin = build_model<double>(cfg);
  copy_params(*model, *twin);

  const Tensor<T> x = input.template cast<T>();
  Tensor<double> twin_x = x.template cast<double>();

  auto params = model->params();
  for (auto* p : params) p->grad.fill(T{0});
  auto logits = model->forward(x, nn::Mode::kTrain);
  std::vector<Tensor<T>> grads;
  multi_head_loss(logits, labels, enabled, &grads);
  const Tensor<T> dx = model->backward(grads);

  std::vector<nn::GradTarget> targets;
  auto twin_params = twin->params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->trainable) continue;
    const auto g = params[i]->grad.template cast<double>();
    targets.push_back({params[i]->name, twin_params[i]->value.values(), g.storage()});
  }
  if (include_input) {
    const auto g = dx.template cast<double>();
    targets.push_back({"input", twin_x.values(), g.storage()});
  }

  auto loss = [&] {
    auto out = twin->forward(twin_x, nn::Mode::kTrain);
    return multi_head_loss<double>(out, labels, enabled, nullptr).total;
  };
  auto regime = [&] { return twin->regime(); };
  return nn::grad_check(targets, loss, regime, opt);
}

}  // namespace ssnet::model
