#pragma once

// Versioned run configuration. One JSON document; unknown keys are rejected.

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dcl/backend.hpp"
#include "dcl/common.hpp"
#include "dcl/corpus.hpp"
#include "dcl/negatives.hpp"
#include "dcl/trainer.hpp"

namespace dcl {

inline constexpr std::string_view kConfigVersion = "1";

struct PathConfig {
  std::string train = "train.jsonl";
  std::string valid = "valid.jsonl";
  std::string test = "test.jsonl";
  std::string format = "canonical_jsonl";
  std::string out_dir = "run";
};

struct ModelConfig {
  std::size_t dim = 32;
};

struct DecodeConfig {
  std::string method = "greedy";
  int k = 10;
  std::size_t max_len = 24;
};

struct ReportConfig {
  std::vector<std::string> stratify_by{"difficulty"};  // "difficulty" and/or "question"
  bool per_example = true;
  std::string compare_metric = "meteor";              // per-item series used by automatic compare
};

struct RunConfig {
  std::string config_version{kConfigVersion};
  std::uint64_t seed = 13;
  PathConfig paths;
  ModelConfig model;
  TrainConfig train;
  DecodeConfig decode;
  ReportConfig report;
  std::vector<std::string> stages{"ingest", "train", "generate", "perturb", "score", "compare"};

  /// Training settings with the run seed applied.
  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  DecodeOptions decode_options(std::uint64_t stream_seed) const {
    DecodeOptions d;
    d.method = decode.method == "top_k" ? DecodeMethod::top_k : DecodeMethod::greedy;
    d.k = decode.k;
    d.max_len = decode.max_len;
    d.seed = stream_seed;
    return d;
  }
};

inline const std::vector<std::string>& known_stages() {
  static const std::vector<std::string> s{"ingest", "train", "generate", "perturb", "score", "compare"};
  return s;
}

inline const std::vector<std::string>& compare_metrics() {
  static const std::vector<std::string> m{"bleu_1", "bleu_2", "bleu_3", "bleu_4", "meteor", "rouge_l", "cider"};
  return m;
}

inline void validate(const RunConfig& c) {
  if (c.config_version != kConfigVersion)
    throw ValidationError("config: unsupported config_version '" + c.config_version + "'");
  parse_format(c.paths.format);
  if (c.model.dim == 0) throw ValidationError("config: model.dim must be >= 1");
  if (c.decode.method != "greedy" && c.decode.method != "top_k")
    throw ValidationError("config: decode.method must be greedy or top_k");
  if (c.decode.k < 1) throw ValidationError("config: decode.k must be >= 1");
  for (const auto& s : c.report.stratify_by)
    if (s != "difficulty" && s != "question")
      throw ValidationError("config: report.stratify_by entries must be difficulty or question, got '" + s + "'");
  if (std::find(compare_metrics().begin(), compare_metrics().end(), c.report.compare_metric) == compare_metrics().end())
    throw ValidationError("config: unknown report.compare_metric '" + c.report.compare_metric + "'");
  for (const auto& s : c.stages)
    if (std::find(known_stages().begin(), known_stages().end(), s) == known_stages().end())
      throw ValidationError("config: unknown stage '" + s + "'");
  if (c.train.k < 1) throw ValidationError("config: negatives.k must be >= 1");
  if (!(c.train.threshold > 0.0)) throw ValidationError("config: negatives.threshold must be positive");
  try {
    c.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& t = c.train;
  return {
      {"config_version", c.config_version},
      {"seed", c.seed},
      {"template_id", std::string(to_string(t.tpl))},
      {"paths",
       {{"train", c.paths.train},
        {"valid", c.paths.valid},
        {"test", c.paths.test},
        {"format", c.paths.format},
        {"out_dir", c.paths.out_dir}}},
      {"model", {{"dim", c.model.dim}}},
      {"train",
       {{"effective_batch", t.effective_batch},
        {"micro_batch", t.micro_batch},
        {"lr0", t.lr0},
        {"max_epochs", t.max_epochs},
        {"warmup_steps", t.warmup_steps},
        {"mcq_epochs", t.mcq_epochs}}},
      {"loss", {{"tau_b", t.loss.tau_b}, {"tau_s", t.loss.tau_s}, {"lambda_b", t.loss.lambda_b}, {"lambda_s", t.loss.lambda_s}}},
      {"negatives",
       {{"strategy", std::string(to_string(t.strategy))},
        {"m", t.m},
        {"k", t.k},
        {"threshold", t.threshold},
        {"attempts", t.attempts},
        {"max_len", t.max_len}}},
      {"decode", {{"method", c.decode.method}, {"k", c.decode.k}, {"max_len", c.decode.max_len}}},
      {"report",
       {{"stratify_by", c.report.stratify_by},
        {"per_example", c.report.per_example},
        {"compare_metric", c.report.compare_metric}}},
      {"stages", c.stages},
  };
}

namespace config_detail {

// Reads `key` from `obj` into `out` when present, rejecting mismatched types.
template <typename T>
void read(const nlohmann::json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("config: bad value type for '" + where + key + "'");
  }
}

inline void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  if (!obj.is_object()) throw ValidationError("config: '" + (where.empty() ? std::string("<root>") : where) +
                                              "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!ok.count(it.key())) throw ValidationError("config: unknown key '" + where + it.key() + "'");
}

inline const nlohmann::json& section(const nlohmann::json& root, const char* key) {
  static const nlohmann::json empty = nlohmann::json::object();
  auto it = root.find(key);
  return it == root.end() ? empty : *it;
}

}  // namespace config_detail

/// Parses a config document over the defaults. Unknown keys (at any depth) are errors.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using namespace config_detail;
  RunConfig c;
  reject_unknown(j, {"config_version", "seed", "template_id", "paths", "model", "train", "loss", "negatives", "decode",
                     "report", "stages"},
                 "");
  read(j, "config_version", c.config_version, "");
  read(j, "seed", c.seed, "");
  std::string tpl{to_string(c.train.tpl)};
  read(j, "template_id", tpl, "");
  try {
    c.train.tpl = parse_template(tpl);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }

  const auto& p = section(j, "paths");
  reject_unknown(p, {"train", "valid", "test", "format", "out_dir"}, "paths.");
  read(p, "train", c.paths.train, "paths.");
  read(p, "valid", c.paths.valid, "paths.");
  read(p, "test", c.paths.test, "paths.");
  read(p, "format", c.paths.format, "paths.");
  read(p, "out_dir", c.paths.out_dir, "paths.");

  const auto& m = section(j, "model");
  reject_unknown(m, {"dim"}, "model.");
  read(m, "dim", c.model.dim, "model.");

  auto& t = c.train;
  const auto& tr = section(j, "train");
  reject_unknown(tr, {"effective_batch", "micro_batch", "lr0", "max_epochs", "warmup_steps", "mcq_epochs"}, "train.");
  read(tr, "effective_batch", t.effective_batch, "train.");
  read(tr, "micro_batch", t.micro_batch, "train.");
  read(tr, "lr0", t.lr0, "train.");
  read(tr, "max_epochs", t.max_epochs, "train.");
  read(tr, "warmup_steps", t.warmup_steps, "train.");
  read(tr, "mcq_epochs", t.mcq_epochs, "train.");

  const auto& l = section(j, "loss");
  reject_unknown(l, {"tau_b", "tau_s", "lambda_b", "lambda_s"}, "loss.");
  read(l, "tau_b", t.loss.tau_b, "loss.");
  read(l, "tau_s", t.loss.tau_s, "loss.");
  read(l, "lambda_b", t.loss.lambda_b, "loss.");
  read(l, "lambda_s", t.loss.lambda_s, "loss.");

  const auto& n = section(j, "negatives");
  reject_unknown(n, {"strategy", "m", "k", "threshold", "attempts", "max_len"}, "negatives.");
  std::string strategy{to_string(t.strategy)};
  read(n, "strategy", strategy, "negatives.");
  try {
    t.strategy = parse_strategy(strategy);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  read(n, "m", t.m, "negatives.");
  read(n, "k", t.k, "negatives.");
  read(n, "threshold", t.threshold, "negatives.");
  read(n, "attempts", t.attempts, "negatives.");
  read(n, "max_len", t.max_len, "negatives.");

  const auto& d = section(j, "decode");
  reject_unknown(d, {"method", "k", "max_len"}, "decode.");
  read(d, "method", c.decode.method, "decode.");
  read(d, "k", c.decode.k, "decode.");
  read(d, "max_len", c.decode.max_len, "decode.");

  const auto& r = section(j, "report");
  reject_unknown(r, {"stratify_by", "per_example", "compare_metric"}, "report.");
  read(r, "stratify_by", c.report.stratify_by, "report.");
  read(r, "per_example", c.report.per_example, "report.");
  read(r, "compare_metric", c.report.compare_metric, "report.");

  read(j, "stages", c.stages, "");
  validate(c);
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline std::string dump_config(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

/// Digest of the canonical dump. Paths are excluded so relocating a run keeps its digest.
inline std::string config_digest(const RunConfig& c) {
  auto j = to_json(c);
  j.erase("paths");
  return hex64(fnv1a(j.dump()));
}

}  // namespace dcl
