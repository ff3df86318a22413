#pragma once

// Stage functions shared by the CLI and the end-to-end pipeline runner.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "dcl/backend.hpp"
#include "dcl/comparison.hpp"
#include "dcl/config.hpp"
#include "dcl/corpus.hpp"
#include "dcl/metrics.hpp"
#include "dcl/negatives.hpp"
#include "dcl/trainer.hpp"

namespace dcl {

namespace fs = std::filesystem;

/// Identity stamped on every artifact of a run.
struct RunStamp {
  std::string config_digest;
  std::uint64_t seed = 0;
};

inline RunStamp stamp_of(const RunConfig& c) { return {config_digest(c), c.seed}; }

inline nlohmann::json stamped(nlohmann::json j, const RunStamp& s) {
  j["config_digest"] = s.config_digest;
  j["seed"] = s.seed;
  return j;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

inline void write_jsonl(const fs::path& path, const std::vector<nlohmann::json>& rows) {
  std::string s;
  for (const auto& r : rows) s += r.dump() + "\n";
  write_text(path, s);
}

inline nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      rows.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Generations

struct Generation {
  InferenceExample example;
  std::string generated;
};

inline nlohmann::json to_json(const Generation& g, const RunStamp& s) {
  auto j = to_json(g.example);
  j["generated"] = g.generated;
  return stamped(std::move(j), s);
}

/// Canonical records carrying a "generated" field.
inline std::vector<Generation> read_generations(const fs::path& path) {
  std::vector<Generation> out;
  std::size_t lineno = 0;
  for (const auto& row : read_jsonl(path)) {
    ++lineno;
    if (!row.contains("generated") || !row.at("generated").is_string())
      throw ParseError(path.string() + " record " + std::to_string(lineno) + ": missing string field 'generated'");
    Generation g{example_from_json(row), row.at("generated").get<std::string>()};
    validate(g.example);
    out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

template <ModelBackend B>
std::vector<Generation> generate_all(const B& model, const std::vector<InferenceExample>& examples, Template tpl,
                                     DecodeOptions opts) {
  std::vector<Generation> out;
  const std::uint64_t base = opts.seed;
  for (const auto& ex : examples) {
    const auto input = model.vocab().encode_text(serialize_input(prepare(ex), tpl).text);
    opts.seed = derive_seed(base, ex.id);
    out.push_back({ex, model.vocab().decode(generate(model, input, opts))});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

inline std::vector<std::string> stratum_labels(std::string_view axis) {
  std::vector<std::string> out;
  if (axis == "difficulty") {
    for (auto d : kAllDifficulties) out.emplace_back(to_string(d));
  } else if (axis == "question") {
    for (auto q : kAllQuestionTypes) out.emplace_back(to_string(q));
  } else {
    throw std::invalid_argument("unknown stratification axis '" + std::string(axis) + "'");
  }
  return out;
}

/// id -> label along one axis. Examples without a difficulty label are left out.
inline std::map<std::string, std::string> labels_for(const std::vector<InferenceExample>& examples,
                                                     std::string_view axis) {
  stratum_labels(axis);
  std::map<std::string, std::string> m;
  for (const auto& ex : examples) {
    if (axis == "question") m[ex.id] = std::string(to_string(ex.question));
    else if (ex.difficulty) m[ex.id] = std::string(to_string(*ex.difficulty));
  }
  return m;
}

/// Corpus report plus one group of strata per requested axis.
inline MetricReport score_with_strata(const std::vector<ScoredPair>& pairs,
                                      const std::vector<InferenceExample>& examples,
                                      const std::vector<std::string>& axes, bool per_example) {
  ScoreOptions opts;
  opts.per_example = per_example;
  MetricReport rep = score_corpus(pairs, opts);
  for (const auto& axis : axes) {
    ScoreOptions s;
    s.strata_labels = labels_for(examples, axis);
    s.required_strata = stratum_labels(axis);
    auto sub = score_corpus(pairs, s);
    for (auto& st : sub.strata) rep.strata.push_back(std::move(st));
  }
  return rep;
}

inline std::vector<ScoredPair> pairs_of(const std::vector<Generation>& gens) {
  std::vector<ScoredPair> out;
  for (const auto& g : gens) out.push_back({g.example.id, g.generated, g.example.answer});
  return out;
}

/// Per-example values of one metric, keyed by id.
inline std::map<std::string, double> metric_series(const std::vector<ScoredPair>& pairs, const std::string& metric) {
  ScoreOptions opts;
  opts.per_example = true;
  const auto rep = score_corpus(pairs, opts);
  std::map<std::string, double> out;
  for (const auto& e : rep.per_example) {
    double v = 0.0;
    if (metric.rfind("bleu_", 0) == 0) v = e.bleu.at(static_cast<std::size_t>(std::stoi(metric.substr(5)) - 1));
    else if (metric == "meteor") v = e.meteor;
    else if (metric == "rouge_l") v = e.rouge_l;
    else if (metric == "cider") {
      if (!e.cider) throw std::invalid_argument("cider series needs at least two distinct references");
      v = *e.cider;
    } else {
      throw std::invalid_argument("unknown metric '" + metric + "'");
    }
    out[e.id] = v;
  }
  return out;
}

/// Automatic comparison of two generation sets on the same examples: one pseudo-judgment
/// per item from the chosen metric, t-test on the metric series.
inline ComparisonReport compare_generations(const std::vector<Generation>& a, const std::vector<Generation>& b,
                                            const std::string& metric, const std::string& axis) {
  if (a.size() != b.size()) throw std::invalid_argument("compare: generation files differ in length");
  std::vector<std::string> ids;
  std::map<std::string, std::string> labels;
  std::vector<InferenceExample> examples;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].example.id != b[i].example.id)
      throw std::invalid_argument("compare: item " + std::to_string(i) + " ids differ ('" + a[i].example.id +
                                  "' vs '" + b[i].example.id + "')");
    ids.push_back(a[i].example.id);
    examples.push_back(a[i].example);
  }
  ScoreSeries series{metric_series(pairs_of(a), metric), metric_series(pairs_of(b), metric)};
  std::vector<std::string> required;
  if (axis.empty()) {
    for (const auto& id : ids) labels[id] = "all";
  } else {
    labels = labels_for(examples, axis);
    required = stratum_labels(axis);
  }
  return stratified_compare(judgments_from_scores(ids, series), labels, required, &series, "automatic:" + metric);
}

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineResult {
  int status = 0;
  std::vector<std::string> artifacts;  // relative to out_dir, in write order
  std::string error;
};

namespace pipeline_detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline bool wants(const RunConfig& c, std::string_view stage) {
  return std::find(c.stages.begin(), c.stages.end(), stage) != c.stages.end();
}

}  // namespace pipeline_detail

/// Runs the configured stages in order. Relative paths in the config resolve against
/// `base`. A failing stage writes error.json and returns status 1.
inline PipelineResult run_pipeline(const RunConfig& cfg, const fs::path& base) {
  using namespace pipeline_detail;
  using nlohmann::json;
  PipelineResult result;
  const RunStamp st = stamp_of(cfg);
  const fs::path out = resolve(base, cfg.paths.out_dir);
  std::string stage = "validate";
  auto emit = [&](const std::string& rel, const json& j) {
    write_json(out / rel, stamped(j, st));
    result.artifacts.push_back(rel);
  };
  auto emit_rows = [&](const std::string& rel, const std::vector<json>& rows) {
    write_jsonl(out / rel, rows);
    result.artifacts.push_back(rel);
  };

  try {
    validate(cfg);
    fs::create_directories(out);
    write_text(out / "config.json", dump_config(cfg));
    result.artifacts.push_back("config.json");

    stage = "ingest";
    const auto format = parse_format(cfg.paths.format);
    const auto train_set = load_dataset(resolve(base, cfg.paths.train), format);
    const auto valid_set = load_dataset(resolve(base, cfg.paths.valid), format);
    const auto test_set = load_dataset(resolve(base, cfg.paths.test), format);
    if (wants(cfg, "ingest")) {
      for (const auto& [name, set] : {std::pair{"train", &train_set}, {"valid", &valid_set}, {"test", &test_set}}) {
        std::ostringstream s;
        write_canonical_jsonl(s, *set);
        write_text(out / "data" / (std::string(name) + ".jsonl"), s.str());
        result.artifacts.push_back("data/" + std::string(name) + ".jsonl");
      }
      emit("ingest.json", {{"train", train_set.size()}, {"valid", valid_set.size()}, {"test", test_set.size()}});
    }

    const TrainConfig tc = cfg.train_config();
    std::vector<InferenceExample> vocab_source = train_set;
    vocab_source.insert(vocab_source.end(), valid_set.begin(), valid_set.end());
    const Vocabulary vocab = build_vocabulary(vocab_source, tc.tpl);
    const ToyBackend init(vocab, cfg.model.dim, derive_seed(cfg.seed, "init"));
    ToyBackend model = init;
    ToyBackend baseline = init;

    if (wants(cfg, "train")) {
      stage = "train";
      fs::create_directories(out / "checkpoints");
      auto res = train(init, tc, train_set, valid_set, [&](const CheckpointInfo& info, const ToyBackend& m) {
        save_checkpoint(out / "checkpoints" / info.path, m, st.config_digest);
        result.artifacts.push_back("checkpoints/" + info.path);
      });
      std::vector<json> log;
      for (const auto& s : res.log) log.push_back(stamped(to_json(s), st));
      emit_rows("train_log.jsonl", log);
      json epochs = json::array();
      for (auto info : res.epochs) {
        info.path = "checkpoints/" + info.path;
        epochs.push_back(to_json(info));
      }
      auto best = res.best;
      best.path = "checkpoints/" + best.path;
      emit("best_checkpoint.json",
           {{"best", to_json(best)}, {"epochs", epochs}, {"backfilled_negatives", res.backfilled_negatives}});
      model = res.best_model;
    }

    std::vector<Generation> gen_model, gen_base;
    if (wants(cfg, "generate") || wants(cfg, "score") || wants(cfg, "compare")) {
      stage = "generate";
      const auto opts = cfg.decode_options(derive_seed(cfg.seed, "decode"));
      gen_model = generate_all(model, test_set, tc.tpl, opts);
      gen_base = generate_all(baseline, test_set, tc.tpl, opts);
      if (wants(cfg, "generate")) {
        std::vector<json> a, b;
        for (const auto& g : gen_model) a.push_back(to_json(g, st));
        for (const auto& g : gen_base) b.push_back(to_json(g, st));
        emit_rows("generations_model.jsonl", a);
        emit_rows("generations_baseline.jsonl", b);
      }
    }

    if (wants(cfg, "perturb")) {
      stage = "perturb";
      std::vector<json> rows;
      const auto& src = train_set;
      std::optional<ToyBackend> mcq;
      if (tc.strategy == NegativeStrategy::replace_mcq) mcq.emplace(train_mcq_scorer(model, src, tc));
      for (const auto& ex : src) {
        const auto input = vocab.encode_text(serialize_input(prepare(ex), tc.tpl).text);
        NegativeSet set;
        switch (tc.strategy) {
          case NegativeStrategy::counterfactual: set = pick_counterfactuals(ex, tc.m, cfg.seed); break;
          case NegativeStrategy::non_optimal:
            set = generate_nonoptimal(model, ex, input, {tc.m, tc.k, tc.attempts, tc.max_len, cfg.seed});
            break;
          case NegativeStrategy::replace_zs:
            set = token_replace(model, ex, input, {tc.threshold, tc.k, ReplaceMode::zero_shot, cfg.seed, tc.m});
            break;
          case NegativeStrategy::replace_mcq:
            set = token_replace(*mcq, ex, input, {tc.threshold, tc.k, ReplaceMode::mcq, cfg.seed, tc.m});
            break;
          case NegativeStrategy::in_batch: throw std::invalid_argument("in_batch negatives are not materialized");
        }
        rows.push_back(stamped(to_json(set), st));
      }
      emit_rows("negatives.jsonl", rows);
    }

    if (wants(cfg, "score")) {
      stage = "score";
      emit("score_model.json",
           to_json(score_with_strata(pairs_of(gen_model), test_set, cfg.report.stratify_by, cfg.report.per_example)));
      emit("score_baseline.json",
           to_json(score_with_strata(pairs_of(gen_base), test_set, cfg.report.stratify_by, cfg.report.per_example)));
    }

    if (wants(cfg, "compare")) {
      stage = "compare";
      const std::string axis = cfg.report.stratify_by.empty() ? "" : cfg.report.stratify_by.front();
      emit("comparison.json", to_json(compare_generations(gen_model, gen_base, cfg.report.compare_metric, axis)));
    }
  } catch (const std::exception& e) {
    result.status = 1;
    result.error = stage + ": " + e.what();
    try {
      write_json(out / "error.json", stamped({{"stage", stage}, {"error", e.what()}}, st));
      result.artifacts.push_back("error.json");
    } catch (const std::exception&) {
      // the output directory itself is unusable; the caller still gets the message
    }
    return result;
  }
  return result;
}

}  // namespace dcl
