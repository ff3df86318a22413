#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "dcl/backend.hpp"
#include "dcl/common.hpp"
#include "dcl/corpus.hpp"
#include "dcl/negatives.hpp"
#include "dcl/objective.hpp"

namespace dcl {

struct TrainConfig {
  std::size_t effective_batch = 64;
  std::size_t micro_batch = 16;
  double lr0 = 1e-4;
  int max_epochs = 10;
  std::size_t warmup_steps = 0;
  LossConfig loss;
  NegativeStrategy strategy = NegativeStrategy::counterfactual;
  std::size_t m = 4;
  int k = 10;
  double threshold = 0.75;
  int attempts = 5;
  std::size_t max_len = 24;
  int mcq_epochs = 3;  // fine-tuning epochs for the replace_mcq scorer
  std::uint64_t seed = 13;
  Template tpl = Template::standard;

  void validate() const {
    if (effective_batch == 0 || micro_batch == 0 || effective_batch % micro_batch != 0)
      throw std::invalid_argument("train: micro_batch must divide effective_batch");
    if (!(lr0 >= 0.0)) throw std::invalid_argument("train: lr0 must be non-negative");
    if (max_epochs < 1) throw std::invalid_argument("train: max_epochs must be >= 1");
    if (strategy == NegativeStrategy::in_batch)
      throw std::invalid_argument("train: in-batch negatives are the cl_b term; choose a per-sample strategy");
    if (m < 1) throw std::invalid_argument("train: m must be >= 1");
    loss.validate();
  }
};

/// Linear decay to 0 at total_steps, after an optional linear warmup.
inline double lr_at(std::size_t step, std::size_t total_steps, double lr0, std::size_t warmup = 0) {
  if (total_steps == 0) throw std::invalid_argument("lr_at: total_steps must be >= 1");
  step = std::min(step, total_steps);
  if (step < warmup) return lr0 * static_cast<double>(step) / static_cast<double>(warmup);
  const double span = static_cast<double>(total_steps - std::min(warmup, total_steps));
  if (span <= 0.0) return 0.0;
  return lr0 * (1.0 - static_cast<double>(step - warmup) / span);
}

// ---------------------------------------------------------------------------

inline EncodedExample encode_example(const Vocabulary& vocab, const InferenceExample& ex, Template tpl) {
  EncodedExample e;
  e.id = ex.id;
  e.input = vocab.encode_text(serialize_input(prepare(ex), tpl).text);
  e.answer = vocab.encode_text(ex.answer);
  return e;
}

/// Every token of serialized inputs, answers and counterfactuals.
inline Vocabulary build_vocabulary(const std::vector<InferenceExample>& examples, Template tpl) {
  std::vector<std::string> texts;
  for (const auto& ex : examples) {
    texts.push_back(serialize_input(prepare(ex), tpl).text);
    texts.push_back(ex.answer);
    for (const auto& c : ex.counterfactuals) texts.push_back(c);
  }
  return Vocabulary::build(texts);
}

template <ModelBackend B>
double perplexity(const B& model, const std::vector<EncodedExample>& data) {
  if (data.empty()) throw std::invalid_argument("perplexity: empty dataset");
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : data) {
    const auto target = with_eos(ex.answer);
    nll += model.sequence_nll(ex.input, target, nullptr, 1.0);
    tokens += target.size();
  }
  return std::exp(nll / static_cast<double>(tokens));
}

/// Gradient of the mean loss over `batch`, accumulated micro-batch by micro-batch.
/// Each micro-batch is weighted by its share of the batch.
template <ModelBackend B>
LossBreakdown<B> accumulate_gradients(const B& model, std::span<const EncodedExample> batch, std::size_t micro,
                                      const LossConfig& cfg) {
  LossBreakdown<B> acc;
  acc.grads = model.zero_gradients();
  const double n = static_cast<double>(batch.size());
  for (std::size_t off = 0; off < batch.size(); off += micro) {
    const auto part = batch.subspan(off, std::min(micro, batch.size() - off));
    auto lb = total_loss(model, part, cfg, true);
    const double w = static_cast<double>(part.size()) / n;
    acc.nll += w * lb.nll;
    acc.cl_b += w * lb.cl_b;
    acc.cl_s += w * lb.cl_s;
    acc.grads.add_scaled(lb.grads, w);
  }
  acc.total = acc.nll + cfg.lambda_b * acc.cl_b + cfg.lambda_s * acc.cl_s;
  return acc;
}

struct StepLog {
  std::size_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  double nll = 0.0;
  double cl_b = 0.0;
  double cl_s = 0.0;
  double total = 0.0;
};

inline nlohmann::json to_json(const StepLog& s) {
  return {{"step", s.step},           {"epoch", s.epoch},           {"lr", round12(s.lr)},
          {"nll", round12(s.nll)},    {"cl_b", round12(s.cl_b)},    {"cl_s", round12(s.cl_s)},
          {"total", round12(s.total)}};
}

struct CheckpointInfo {
  int epoch = 0;
  std::size_t step = 0;
  double validation_perplexity = 0.0;
  std::string path;
};

inline nlohmann::json to_json(const CheckpointInfo& c) {
  return {{"epoch", c.epoch},
          {"step", c.step},
          {"validation_perplexity", round12(c.validation_perplexity)},
          {"path", c.path}};
}

inline std::string checkpoint_name(int epoch) { return "checkpoint_epoch_" + std::to_string(epoch) + ".json"; }

template <ModelBackend B>
struct TrainResult {
  B best_model;
  B final_model;
  CheckpointInfo best;
  std::vector<CheckpointInfo> epochs;  // epoch 0 is the untrained model
  std::vector<StepLog> log;
  std::size_t backfilled_negatives = 0;
};

template <ModelBackend B>
using EpochCallback = std::function<void(const CheckpointInfo&, const B&)>;

namespace trainer_detail {

template <ModelBackend B>
B train_loop(B model, const TrainConfig& cfg, const std::vector<InferenceExample>& train_set,
             const std::vector<InferenceExample>& valid_set, TrainResult<B>* result, const EpochCallback<B>& on_epoch);

}  // namespace trainer_detail

/// Fine-tunes a copy of `model` to separate gold answers from dataset counterfactuals.
/// Stands in for the MCQ-trained masked LM used by replace_mcq.
template <ModelBackend B>
B train_mcq_scorer(const B& model, const std::vector<InferenceExample>& examples, const TrainConfig& base) {
  std::vector<InferenceExample> usable;
  std::size_t m = std::numeric_limits<std::size_t>::max();
  for (const auto& ex : examples)
    if (!ex.counterfactuals.empty()) {
      usable.push_back(ex);
      m = std::min(m, ex.counterfactuals.size());
    }
  if (usable.empty()) throw std::invalid_argument("train_mcq_scorer: no example carries counterfactuals");
  TrainConfig cfg = base;
  cfg.loss.lambda_b = 0.0;
  cfg.loss.lambda_s = 1.0;
  cfg.strategy = NegativeStrategy::counterfactual;
  cfg.m = m;
  cfg.max_epochs = base.mcq_epochs;
  cfg.seed = derive_seed(base.seed, "mcq-scorer");
  cfg.effective_batch = std::min(base.effective_batch, usable.size());
  cfg.micro_batch = cfg.effective_batch;
  return trainer_detail::train_loop<B>(model, cfg, usable, usable, nullptr, {});
}

namespace trainer_detail {

template <ModelBackend B>
std::vector<std::vector<std::vector<TokenId>>> resolve_negatives(const B& model, const B* mcq_scorer,
                                                                 const TrainConfig& cfg,
                                                                 const std::vector<InferenceExample>& data,
                                                                 const std::vector<EncodedExample>& enc, int epoch,
                                                                 std::size_t* backfilled) {
  std::vector<std::vector<std::vector<TokenId>>> out(data.size());
  const auto& vocab = model.vocab();
  for (std::size_t i = 0; i < data.size(); ++i) {
    NegativeSet set;
    switch (cfg.strategy) {
      case NegativeStrategy::counterfactual:
        set = pick_counterfactuals(data[i], cfg.m, cfg.seed);
        break;
      case NegativeStrategy::non_optimal:
        set = generate_nonoptimal(model, data[i], enc[i].input,
                                  NonOptimalConfig{cfg.m, cfg.k, cfg.attempts, cfg.max_len,
                                                   derive_seed(cfg.seed, "epoch-" + std::to_string(epoch))});
        break;
      case NegativeStrategy::replace_zs:
      case NegativeStrategy::replace_mcq: {
        const B& scorer = cfg.strategy == NegativeStrategy::replace_mcq ? *mcq_scorer : model;
        ReplaceConfig rc{cfg.threshold, cfg.k,
                         cfg.strategy == NegativeStrategy::replace_mcq ? ReplaceMode::mcq : ReplaceMode::zero_shot,
                         cfg.seed, cfg.m};
        set = token_replace(scorer, data[i], enc[i].input, rc);
        break;
      }
      case NegativeStrategy::in_batch:
        throw std::invalid_argument("in_batch is not a per-sample strategy");
    }
    for (const auto& s : set.negatives) out[i].push_back(vocab.encode_text(s));
    // An example whose every slot collided borrows another example's gold answer.
    if (out[i].empty() && data.size() > 1) {
      Rng rng(derive_seed(cfg.seed, "backfill-" + data[i].id + "-" + std::to_string(epoch)));
      std::size_t j = uniform_index(rng, data.size() - 1);
      if (j >= i) ++j;
      out[i].push_back(enc[j].answer);
      if (backfilled) ++*backfilled;
    }
  }
  return out;
}

template <ModelBackend B>
B train_loop(B model, const TrainConfig& cfg, const std::vector<InferenceExample>& train_set,
             const std::vector<InferenceExample>& valid_set, TrainResult<B>* result, const EpochCallback<B>& on_epoch) {
  cfg.validate();
  if (train_set.empty() || valid_set.empty()) throw std::invalid_argument("train: empty train or validation set");
  const auto& vocab = model.vocab();
  std::vector<EncodedExample> train_enc, valid_enc;
  for (const auto& ex : train_set) train_enc.push_back(encode_example(vocab, ex, cfg.tpl));
  for (const auto& ex : valid_set) valid_enc.push_back(encode_example(vocab, ex, cfg.tpl));

  const bool need_negatives = cfg.loss.lambda_s > 0.0;
  std::optional<B> mcq_scorer;
  if (need_negatives && cfg.strategy == NegativeStrategy::replace_mcq)
    mcq_scorer.emplace(train_mcq_scorer(model, train_set, cfg));
  std::size_t backfilled = 0;
  auto attach = [&](int epoch) {
    auto negs = resolve_negatives(model, mcq_scorer ? &*mcq_scorer : nullptr, cfg, train_set, train_enc, epoch,
                                  &backfilled);
    for (std::size_t i = 0; i < train_enc.size(); ++i) train_enc[i].negatives = std::move(negs[i]);
  };
  if (need_negatives) attach(0);

  const std::size_t n = train_enc.size();
  const std::size_t steps_per_epoch = (n + cfg.effective_batch - 1) / cfg.effective_batch;
  const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.max_epochs);

  auto record_epoch = [&](int epoch, std::size_t step) {
    CheckpointInfo info{epoch, step, perplexity(model, valid_enc), checkpoint_name(epoch)};
    if (result) {
      result->epochs.push_back(info);
      if (result->epochs.size() == 1 || info.validation_perplexity < result->best.validation_perplexity) {
        result->best = info;
        result->best_model = model;
      }
    }
    if (on_epoch) on_epoch(info, model);
  };
  if (result) record_epoch(0, 0);

  std::size_t step = 0;
  std::vector<std::size_t> order(n);
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (need_negatives && cfg.strategy == NegativeStrategy::non_optimal && epoch > 1) attach(epoch);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(cfg.seed, "shuffle-" + std::to_string(epoch)));
    shuffle_in_place(order, rng);

    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<EncodedExample> batch;
      for (std::size_t i = s * cfg.effective_batch; i < std::min(n, (s + 1) * cfg.effective_batch); ++i)
        batch.push_back(train_enc[order[i]]);
      LossBreakdown<B> lb;
      try {
        lb = accumulate_gradients(model, std::span<const EncodedExample>(batch), cfg.micro_batch, cfg.loss);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train: step " + std::to_string(step) + " (epoch " + std::to_string(epoch) +
                                 "): " + e.what());
      }
      if (!std::isfinite(lb.total))
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
      const double lr = lr_at(step, total_steps, cfg.lr0, cfg.warmup_steps);
      model.apply_gradients(lb.grads, lr);
      if (result) result->log.push_back({step, epoch, lr, lb.nll, lb.cl_b, lb.cl_s, lb.total});
      ++step;
    }
    if (result) record_epoch(epoch, step);
  }
  if (result) result->backfilled_negatives = backfilled;
  return model;
}

}  // namespace trainer_detail

/// Seeded-shuffle SGD with gradient accumulation and a linear schedule. Returns the
/// checkpoint with the lowest validation perplexity (earliest epoch on ties).
template <ModelBackend B>
TrainResult<B> train(B model, const TrainConfig& cfg, const std::vector<InferenceExample>& train_set,
                     const std::vector<InferenceExample>& valid_set,
                     const std::type_identity_t<EpochCallback<B>>& on_epoch = {}) {
  TrainResult<B> result;
  result.final_model = trainer_detail::train_loop<B>(std::move(model), cfg, train_set, valid_set, &result, on_epoch);
  return result;
}

}  // namespace dcl
