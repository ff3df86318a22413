// dcl: command-line front end for the dialogue contrastive-learning workbench.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dcl/dcl.hpp"

namespace {

using namespace dcl;
using nlohmann::json;

// Flags shared by every subcommand that reads a run config.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch;
  std::optional<std::size_t> micro_batch;
  std::optional<double> lambda_b, lambda_s, tau_b, tau_s;
  std::optional<std::string> strategy;
  std::optional<std::size_t> m;
  std::optional<int> k;
  std::optional<double> threshold;
  std::optional<std::size_t> dim;
  std::optional<std::string> template_id;
  std::optional<std::string> decode;
  std::optional<std::size_t> max_len;
  std::optional<std::string> format;
};

void add_config_flag(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "Run config JSON (defaults apply to missing keys)")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "Run seed");
}

void add_train_flags(CLI::App* app, Overrides& o) {
  app->add_option("--epochs", o.epochs, "Maximum epochs");
  app->add_option("--lr", o.lr, "Initial learning rate");
  app->add_option("--batch", o.batch, "Effective batch size");
  app->add_option("--micro-batch", o.micro_batch, "Micro-batch size (must divide --batch)");
  app->add_option("--lambda-b", o.lambda_b, "Weight of the in-batch contrastive loss");
  app->add_option("--lambda-s", o.lambda_s, "Weight of the per-sample contrastive loss");
  app->add_option("--tau-b", o.tau_b, "Temperature of the in-batch loss");
  app->add_option("--tau-s", o.tau_s, "Temperature of the per-sample loss");
  app->add_option("--dim", o.dim, "Embedding width of the toy backend");
  app->add_option("--template", o.template_id, "Input template id (default, turn_index)");
}

void add_negative_flags(CLI::App* app, Overrides& o) {
  app->add_option("--strategy", o.strategy, "counterfactual, non_optimal, replace_zs or replace_mcq");
  app->add_option("--m", o.m, "Negatives per example");
  app->add_option("--k", o.k, "Top-k for sampling and replacement candidates");
  app->add_option("--threshold", o.threshold, "Token-replacement threshold on |delta log p|");
}

void add_decode_flags(CLI::App* app, Overrides& o) {
  app->add_option("--decode", o.decode, "greedy or top_k");
  app->add_option("--max-len", o.max_len, "Maximum generated tokens");
}

// Loads the config (or defaults) and applies command-line overrides.
RunConfig resolve_config(const Overrides& o) {
  json j = o.config.empty() ? json::object() : read_json(o.config);
  auto set = [&](const char* section, const char* key, const json& v) {
    if (!j.contains(section)) j[section] = json::object();
    j[section][key] = v;
  };
  if (o.seed) j["seed"] = *o.seed;
  if (o.template_id) j["template_id"] = *o.template_id;
  if (o.epochs) set("train", "max_epochs", *o.epochs);
  if (o.lr) set("train", "lr0", *o.lr);
  if (o.batch) set("train", "effective_batch", *o.batch);
  if (o.micro_batch) set("train", "micro_batch", *o.micro_batch);
  if (o.batch && !o.micro_batch) {
    // keep the configured micro-batch when it still divides the new batch
    const auto micro = j["train"].value("micro_batch", RunConfig{}.train.micro_batch);
    if (micro == 0 || *o.batch % micro != 0) set("train", "micro_batch", *o.batch);
  }
  if (o.lambda_b) set("loss", "lambda_b", *o.lambda_b);
  if (o.lambda_s) set("loss", "lambda_s", *o.lambda_s);
  if (o.tau_b) set("loss", "tau_b", *o.tau_b);
  if (o.tau_s) set("loss", "tau_s", *o.tau_s);
  if (o.strategy) set("negatives", "strategy", *o.strategy);
  if (o.m) set("negatives", "m", *o.m);
  if (o.k) {
    set("negatives", "k", *o.k);
    set("decode", "k", *o.k);
  }
  if (o.threshold) set("negatives", "threshold", *o.threshold);
  if (o.dim) set("model", "dim", *o.dim);
  if (o.decode) set("decode", "method", *o.decode);
  if (o.max_len) set("decode", "max_len", *o.max_len);
  if (o.format) set("paths", "format", *o.format);
  return config_from_json(j);
}

fs::path config_base(const Overrides& o) {
  return o.config.empty() ? fs::current_path() : fs::absolute(o.config).parent_path();
}

std::vector<InferenceExample> load_canonical(const std::string& path) {
  return load_dataset(path, DatasetFormat::canonical_jsonl);
}

ToyBackend load_model(const std::string& path) { return load_checkpoint(path).model; }

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---------------------------------------------------------------------------

int cmd_ingest(const std::string& in, const std::string& format, const std::string& out) {
  const auto examples = load_dataset(in, parse_format(format));
  save_dataset(out, examples);
  std::map<std::string, int> by_difficulty, by_question;
  for (const auto& ex : examples) {
    ++by_question[std::string(to_string(ex.question))];
    ++by_difficulty[ex.difficulty ? std::string(to_string(*ex.difficulty)) : "unlabeled"];
  }
  print_json({{"examples", examples.size()}, {"by_question", by_question}, {"by_difficulty", by_difficulty}});
  return 0;
}

int cmd_train(const Overrides& o, const std::string& train_path, const std::string& valid_path,
              const std::string& out_dir) {
  RunConfig cfg = resolve_config(o);
  const fs::path base = config_base(o);
  const auto format = parse_format(cfg.paths.format);
  const auto train_set = load_dataset(train_path.empty() ? base / cfg.paths.train : fs::path(train_path), format);
  const auto valid_set = load_dataset(valid_path.empty() ? base / cfg.paths.valid : fs::path(valid_path), format);
  const fs::path out = out_dir.empty() ? base / cfg.paths.out_dir : fs::path(out_dir);
  const RunStamp st = stamp_of(cfg);
  const TrainConfig tc = cfg.train_config();

  std::vector<InferenceExample> vocab_source = train_set;
  vocab_source.insert(vocab_source.end(), valid_set.begin(), valid_set.end());
  ToyBackend init(build_vocabulary(vocab_source, tc.tpl), cfg.model.dim, derive_seed(cfg.seed, "init"));

  fs::create_directories(out / "checkpoints");
  write_text(out / "config.json", dump_config(cfg));
  auto res = train(init, tc, train_set, valid_set, [&](const CheckpointInfo& info, const ToyBackend& m) {
    save_checkpoint(out / "checkpoints" / info.path, m, st.config_digest);
    log(LogLevel::info, "epoch " + std::to_string(info.epoch) + " validation perplexity " +
                            std::to_string(info.validation_perplexity));
  });
  std::vector<json> rows;
  for (const auto& s : res.log) rows.push_back(stamped(to_json(s), st));
  write_jsonl(out / "train_log.jsonl", rows);
  auto best = res.best;
  best.path = "checkpoints/" + best.path;
  json summary = stamped({{"best", to_json(best)}, {"backfilled_negatives", res.backfilled_negatives}}, st);
  json epochs = json::array();
  for (auto e : res.epochs) {
    e.path = "checkpoints/" + e.path;
    epochs.push_back(to_json(e));
  }
  summary["epochs"] = epochs;
  write_json(out / "best_checkpoint.json", summary);
  print_json(summary["best"]);
  return 0;
}

int cmd_generate(const Overrides& o, const std::string& checkpoint, const std::string& in, const std::string& out) {
  RunConfig cfg = resolve_config(o);
  const auto model = load_model(checkpoint);
  const auto examples = load_canonical(in);
  const RunStamp st = stamp_of(cfg);
  const auto gens = generate_all(model, examples, cfg.train.tpl, cfg.decode_options(derive_seed(cfg.seed, "decode")));
  std::vector<json> rows;
  for (const auto& g : gens) rows.push_back(to_json(g, st));
  write_jsonl(out, rows);
  print_json({{"generated", gens.size()}, {"out", out}});
  return 0;
}

int cmd_perturb(const Overrides& o, const std::string& in, const std::string& out, const std::string& checkpoint) {
  RunConfig cfg = resolve_config(o);
  const TrainConfig tc = cfg.train_config();
  const RunStamp st = stamp_of(cfg);
  const auto examples = load_canonical(in);
  std::optional<ToyBackend> model;
  if (tc.strategy != NegativeStrategy::counterfactual) {
    if (checkpoint.empty()) {
      ToyBackend init(build_vocabulary(examples, tc.tpl), cfg.model.dim, derive_seed(cfg.seed, "init"));
      log(LogLevel::warn, "perturb: no --checkpoint given; using an untrained model");
      model.emplace(std::move(init));
    } else {
      model.emplace(load_model(checkpoint));
    }
  }
  std::optional<ToyBackend> mcq;
  if (tc.strategy == NegativeStrategy::replace_mcq) mcq.emplace(train_mcq_scorer(*model, examples, tc));

  std::vector<json> rows;
  std::size_t produced = 0, dropped = 0;
  for (const auto& ex : examples) {
    NegativeSet set;
    std::vector<TokenId> input;
    if (model) input = model->vocab().encode_text(serialize_input(prepare(ex), tc.tpl).text);
    switch (tc.strategy) {
      case NegativeStrategy::counterfactual: set = pick_counterfactuals(ex, tc.m, cfg.seed); break;
      case NegativeStrategy::non_optimal:
        set = generate_nonoptimal(*model, ex, input, {tc.m, tc.k, tc.attempts, tc.max_len, cfg.seed});
        break;
      case NegativeStrategy::replace_zs:
        set = token_replace(*model, ex, input, {tc.threshold, tc.k, ReplaceMode::zero_shot, cfg.seed, tc.m});
        break;
      case NegativeStrategy::replace_mcq:
        set = token_replace(*mcq, ex, input, {tc.threshold, tc.k, ReplaceMode::mcq, cfg.seed, tc.m});
        break;
      case NegativeStrategy::in_batch: throw std::invalid_argument("in_batch negatives are not materialized");
    }
    produced += set.negatives.size();
    dropped += set.dropped.size();
    rows.push_back(stamped(to_json(set), st));
  }
  write_jsonl(out, rows);
  print_json({{"examples", examples.size()}, {"negatives", produced}, {"dropped_slots", dropped}});
  return 0;
}

int cmd_score(const std::string& hyp, const std::string& ref, const std::vector<std::string>& axes, bool per_example,
              const std::string& out) {
  std::vector<ScoredPair> pairs;
  std::vector<InferenceExample> examples;
  const bool hyp_jsonl = hyp.ends_with(".jsonl");
  if (hyp_jsonl) {
    for (auto& g : read_generations(hyp)) {
      pairs.push_back({g.example.id, g.generated, g.example.answer});
      examples.push_back(std::move(g.example));
    }
    if (!ref.empty()) {
      // an explicit reference file overrides the gold answers carried by the generations
      const auto refs = ref.ends_with(".jsonl") ? std::vector<std::string>{} : read_lines(ref);
      if (ref.ends_with(".jsonl")) {
        const auto ref_examples = load_canonical(ref);
        if (ref_examples.size() != pairs.size()) throw std::invalid_argument("score: --ref and --hyp differ in length");
        for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i].reference = ref_examples[i].answer;
      } else {
        if (refs.size() != pairs.size()) throw std::invalid_argument("score: --ref and --hyp differ in length");
        for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i].reference = refs[i];
      }
    }
  } else {
    if (ref.empty()) throw std::invalid_argument("score: plain-text --hyp needs --ref");
    const auto hyps = read_lines(hyp);
    if (ref.ends_with(".jsonl")) {
      examples = load_canonical(ref);
      if (examples.size() != hyps.size()) throw std::invalid_argument("score: --ref and --hyp differ in length");
      for (std::size_t i = 0; i < hyps.size(); ++i) pairs.push_back({examples[i].id, hyps[i], examples[i].answer});
    } else {
      const auto refs = read_lines(ref);
      if (refs.size() != hyps.size()) throw std::invalid_argument("score: --ref and --hyp differ in length");
      for (std::size_t i = 0; i < hyps.size(); ++i) pairs.push_back({std::to_string(i + 1), hyps[i], refs[i]});
    }
  }
  if (!axes.empty() && examples.empty())
    throw std::invalid_argument("score: --stratify-by needs canonical records carrying labels");
  const auto report = to_json(score_with_strata(pairs, examples, axes, per_example));
  if (out.empty()) print_json(report);
  else write_json(out, report);
  return 0;
}

std::vector<Judgment> read_judgments(const std::string& path) {
  std::vector<Judgment> out;
  std::size_t lineno = 0;
  for (const auto& row : read_jsonl(path)) {
    ++lineno;
    try {
      out.push_back(judgment_from_json(row));
    } catch (const std::exception& e) {
      throw ParseError(path + " record " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

AggregationRule parse_rule(const std::string& s) {
  if (s == "strict_majority") return AggregationRule::strict_majority;
  if (s == "per_judgment") return AggregationRule::per_judgment;
  throw std::invalid_argument("unknown aggregation rule '" + s + "'");
}

int cmd_agree(const std::string& path, const std::string& side, const std::string& rule, const std::string& out) {
  const auto items = group_by_item(read_judgments(path));
  const Choice s = parse_choice(side);
  const auto wtl = win_tie_lose(items, s, parse_rule(rule));
  json j{{"items", items.size()},
         {"raters", items.empty() ? 0 : items.front().votes.size()},
         {"side", side},
         {"aggregation_rule", rule},
         {"win", round12(wtl.win)},
         {"tie", round12(wtl.tie)},
         {"lose", round12(wtl.lose)},
         {"winning_rate", round12(winning_rate(items, s).rate)},
         {"winning_rate_other", round12(winning_rate(items, other_side(s)).rate)}};
  const auto k = fleiss_kappa(count_table(items));
  j["kappa"] = round12(k.kappa);
  j["kappa_degenerate"] = k.degenerate;
  if (out.empty()) print_json(j);
  else write_json(out, j);
  return 0;
}

int cmd_compare(const std::string& a_path, const std::string& b_path, const std::string& judgments,
                const std::string& metric, const std::string& axis, const std::string& rule, const std::string& out) {
  const auto a = read_generations(a_path);
  const auto b = read_generations(b_path);
  ComparisonReport rep;
  if (judgments.empty()) {
    rep = compare_generations(a, b, metric, axis);
  } else {
    std::vector<InferenceExample> examples;
    for (const auto& g : a) examples.push_back(g.example);
    std::map<std::string, std::string> labels;
    std::vector<std::string> required;
    if (axis.empty()) {
      for (const auto& ex : examples) labels[ex.id] = "all";
    } else {
      labels = labels_for(examples, axis);
      required = stratum_labels(axis);
    }
    rep = stratified_compare(read_judgments(judgments), labels, required, nullptr, "judgments", parse_rule(rule));
  }
  const auto j = to_json(rep);
  if (out.empty()) print_json(j);
  else write_json(out, j);
  return 0;
}

int cmd_gradcheck(const Overrides& o, double tol, std::size_t batch, bool inject_fault, const std::string& out) {
  RunConfig cfg = resolve_config(o);
  const TrainConfig tc = cfg.train_config();
  const auto examples = make_synthetic_corpus({batch, cfg.seed, "gradcheck"});
  const auto vocab = build_vocabulary(examples, tc.tpl);
  const ToyBackend model(vocab, cfg.model.dim, derive_seed(cfg.seed, "gradcheck-init"));
  std::vector<EncodedExample> enc;
  for (const auto& ex : examples) {
    auto e = encode_example(vocab, ex, tc.tpl);
    for (const auto& n : pick_counterfactuals(ex, tc.m, cfg.seed).negatives) e.negatives.push_back(vocab.encode_text(n));
    enc.push_back(std::move(e));
  }
  FiniteDiffOptions opt;
  opt.tol = tol;
  opt.seed = cfg.seed;
  std::function<void(ToyParameters&)> tamper;
  if (inject_fault) tamper = [](ToyParameters& g) { g.flat(g.size() / 2) += 1e-2; };
  const auto rep = finite_diff_check(model, std::span<const EncodedExample>(enc), tc.loss, opt, tamper);
  json worst = json::array();
  for (const auto& w : rep.worst)
    worst.push_back({{"parameter", w.parameter},
                     {"analytic", round12(w.analytic)},
                     {"numeric", round12(w.numeric)},
                     {"rel_error", round12(w.rel_error)}});
  json j = stamped({{"passed", rep.passed},
                    {"checked", rep.checked},
                    {"total_parameters", rep.total_parameters},
                    {"failures", rep.failures.size()},
                    {"max_rel_error", round12(rep.max_rel_error)},
                    {"tol", tol},
                    {"h", opt.h},
                    {"batch", batch},
                    {"m", tc.m},
                    {"worst", worst}},
                   stamp_of(cfg));
  if (out.empty()) print_json(j);
  else write_json(out, j);
  return rep.passed ? 0 : 1;
}

template <typename T>
json list_or_default(const std::vector<T>& v, const T& fallback) {
  return v.empty() ? json::array({fallback}) : json(v);
}

int cmd_sweep(const Overrides& o, const std::vector<double>& lambda_b, const std::vector<double>& lambda_s,
              const std::vector<std::size_t>& ms, const std::vector<std::string>& strategies,
              const std::string& out_dir) {
  const RunConfig base_cfg = resolve_config(o);
  const fs::path base = config_base(o);
  const fs::path out = out_dir.empty() ? base / base_cfg.paths.out_dir : fs::path(out_dir);
  json base_json = to_json(base_cfg);
  json runs = json::array();
  int status = 0;
  std::size_t n = 0;
  const auto& t = base_cfg.train;
  for (const auto& lb : list_or_default(lambda_b, t.loss.lambda_b))
    for (const auto& ls : list_or_default(lambda_s, t.loss.lambda_s))
      for (const auto& m : list_or_default(ms, t.m))
        for (const auto& s : list_or_default(strategies, std::string(to_string(t.strategy)))) {
          json j = base_json;
          j["loss"]["lambda_b"] = lb;
          j["loss"]["lambda_s"] = ls;
          j["negatives"]["m"] = m;
          j["negatives"]["strategy"] = s;
          char name[32];
          std::snprintf(name, sizeof(name), "run_%03zu", n++);
          // absolute data paths so each run directory is self-contained
          for (const char* key : {"train", "valid", "test"})
            j["paths"][key] = fs::absolute(base / j["paths"][key].get<std::string>()).string();
          j["paths"]["out_dir"] = (out / name).string();
          const RunConfig cfg = config_from_json(j);
          const auto res = run_pipeline(cfg, base);
          json row{{"run", name},
                   {"lambda_b", lb},
                   {"lambda_s", ls},
                   {"m", m},
                   {"strategy", s},
                   {"config_digest", config_digest(cfg)},
                   {"status", res.status}};
          if (res.status == 0) {
            const fs::path dir = out / name;
            if (fs::exists(dir / "best_checkpoint.json"))
              row["validation_perplexity"] = read_json(dir / "best_checkpoint.json")["best"]["validation_perplexity"];
            if (fs::exists(dir / "score_model.json")) {
              const auto sc = read_json(dir / "score_model.json");
              row["bleu"] = sc["bleu"];
              row["meteor"] = sc["meteor"];
              row["rouge_l"] = sc["rouge_l"];
              row["cider"] = sc["cider"];
            }
          } else {
            row["error"] = res.error;
            status = 1;
          }
          runs.push_back(row);
        }
  write_json(out / "sweep.json", {{"runs", runs}});
  print_json({{"runs", runs.size()}, {"summary", (out / "sweep.json").string()}, {"status", status}});
  return status;
}

int cmd_pipeline(const Overrides& o, const std::string& out_dir) {
  RunConfig cfg = resolve_config(o);
  if (!out_dir.empty()) cfg.paths.out_dir = fs::absolute(out_dir).string();
  const auto res = run_pipeline(cfg, config_base(o));
  if (res.status != 0) {
    std::cerr << "dcl pipeline failed at " << res.error << "\n";
    return res.status;
  }
  print_json({{"artifacts", res.artifacts}, {"config_digest", config_digest(cfg)}, {"seed", cfg.seed}});
  return 0;
}

int cmd_synth(std::size_t count, std::uint64_t seed, const std::string& prefix, const std::string& out) {
  save_dataset(out, make_synthetic_corpus({count, seed, prefix}));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dialogue inference workbench: contrastive training, negative sampling and evaluation"};
  app.require_subcommand(1);
  Overrides o;

  std::string in, out, format = "canonical_jsonl";
  auto* ingest = app.add_subcommand("ingest", "Validate a dataset and write it as canonical JSONL");
  ingest->add_option("--in", in, "Input dataset")->required()->check(CLI::ExistingFile);
  ingest->add_option("--format", format, "canonical_jsonl or cicero_json")
      ->check(CLI::IsMember({"canonical_jsonl", "cicero_json"}));
  ingest->add_option("--out", out, "Output canonical JSONL")->required();

  std::string train_path, valid_path, out_dir;
  auto* train_cmd = app.add_subcommand("train", "Train the toy backend and write checkpoints and a step log");
  add_config_flag(train_cmd, o);
  add_train_flags(train_cmd, o);
  add_negative_flags(train_cmd, o);
  train_cmd->add_option("--train", train_path, "Training set (canonical JSONL)");
  train_cmd->add_option("--valid", valid_path, "Validation set (canonical JSONL)");
  train_cmd->add_option("--out-dir", out_dir, "Output directory");
  train_cmd->add_option("--format", o.format, "Dataset format");

  std::string checkpoint;
  auto* gen = app.add_subcommand("generate", "Decode answers for every example");
  add_config_flag(gen, o);
  add_decode_flags(gen, o);
  gen->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--in", in, "Examples (canonical JSONL)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output JSONL (canonical records with a generated field)")->required();
  gen->add_option("--k", o.k, "Top-k for sampling");
  gen->add_option("--template", o.template_id, "Input template id");

  auto* perturb = app.add_subcommand("perturb", "Build negative samples for every example");
  add_config_flag(perturb, o);
  add_negative_flags(perturb, o);
  perturb->add_option("--in", in, "Examples (canonical JSONL)")->required()->check(CLI::ExistingFile);
  perturb->add_option("--out", out, "Output JSONL, one negative set per example")->required();
  perturb->add_option("--checkpoint", checkpoint, "Model for generated or token-replaced negatives");
  perturb->add_option("--template", o.template_id, "Input template id");

  std::string hyp, ref;
  std::vector<std::string> axes;
  bool per_example = false;
  auto* score = app.add_subcommand("score", "BLEU-1..4, METEOR, ROUGE-L and CIDEr");
  score->add_option("--hyp", hyp, "Hypotheses: plain text lines or JSONL with a generated field")
      ->required()
      ->check(CLI::ExistingFile);
  score->add_option("--ref", ref, "References: plain text lines or canonical JSONL")->check(CLI::ExistingFile);
  score->add_option("--stratify-by", axes, "difficulty and/or question")
      ->check(CLI::IsMember({"difficulty", "question"}));
  score->add_flag("--per-example", per_example, "Include sentence-level scores");
  score->add_option("--out", out, "Report JSON (stdout when omitted)");

  std::string judgments, side = "option_1", rule = "strict_majority";
  auto* agree = app.add_subcommand("agree", "Fleiss kappa, win/tie/lose and winning rates from judgments");
  agree->add_option("--judgments", judgments, "Judgments JSONL (item_id, rater_id, choice)")
      ->required()
      ->check(CLI::ExistingFile);
  agree->add_option("--side", side, "Side of interest")->check(CLI::IsMember({"option_1", "option_2"}));
  agree->add_option("--rule", rule, "strict_majority or per_judgment")
      ->check(CLI::IsMember({"strict_majority", "per_judgment"}));
  agree->add_option("--out", out, "Report JSON (stdout when omitted)");

  std::string a_path, b_path, metric = "meteor", axis;
  auto* compare = app.add_subcommand("compare", "Compare two generation files, stratified");
  compare->add_option("--a", a_path, "Generations of system A (option_1)")->required()->check(CLI::ExistingFile);
  compare->add_option("--b", b_path, "Generations of system B (option_2)")->required()->check(CLI::ExistingFile);
  compare->add_option("--judgments", judgments, "Human judgments; automatic scores are used when omitted")
      ->check(CLI::ExistingFile);
  compare->add_option("--metric", metric, "Metric for automatic comparison")
      ->check(CLI::IsMember(compare_metrics()));
  compare->add_option("--stratify-by", axis, "difficulty or question")->check(CLI::IsMember({"difficulty", "question"}));
  compare->add_option("--rule", rule, "Win/tie/lose aggregation rule")
      ->check(CLI::IsMember({"strict_majority", "per_judgment"}));
  compare->add_option("--out", out, "Report JSON (stdout when omitted)");

  double tol = 1e-4;
  std::size_t batch = 4;
  bool inject = false;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradients");
  add_config_flag(grad, o);
  grad->add_option("--tol", tol, "Relative tolerance");
  grad->add_option("--batch-size", batch, "Examples in the checked batch");
  grad->add_option("--m", o.m, "Negatives per example");
  grad->add_option("--dim", o.dim, "Embedding width");
  grad->add_option("--lambda-b", o.lambda_b, "Weight of the in-batch contrastive loss");
  grad->add_option("--lambda-s", o.lambda_s, "Weight of the per-sample contrastive loss");
  grad->add_flag("--inject-fault", inject, "Corrupt one analytic gradient entry (the check must fail)");
  grad->add_option("--out", out, "Report JSON (stdout when omitted)");

  std::vector<double> sweep_lb, sweep_ls;
  std::vector<std::size_t> sweep_m;
  std::vector<std::string> sweep_strategy;
  auto* sweep = app.add_subcommand("sweep", "Run the pipeline over a grid of lambda_b, lambda_s, m and strategy");
  add_config_flag(sweep, o);
  add_train_flags(sweep, o);
  sweep->add_option("--lambda-b-values", sweep_lb, "Values of lambda_b")->delimiter(',');
  sweep->add_option("--lambda-s-values", sweep_ls, "Values of lambda_s")->delimiter(',');
  sweep->add_option("--m-values", sweep_m, "Values of m")->delimiter(',');
  sweep->add_option("--strategies", sweep_strategy, "Negative strategies")->delimiter(',');
  sweep->add_option("--out-dir", out_dir, "Directory receiving one run_NNN directory per grid point");

  auto* pipeline = app.add_subcommand("pipeline", "ingest, train, generate, perturb, score and compare in one go");
  add_config_flag(pipeline, o);
  add_train_flags(pipeline, o);
  add_negative_flags(pipeline, o);
  add_decode_flags(pipeline, o);
  pipeline->add_option("--out-dir", out_dir, "Output directory (overrides paths.out_dir)");

  std::size_t count = 50;
  std::uint64_t synth_seed = 7;
  std::string prefix = "ex";
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
  synth->add_option("--count", count, "Number of examples");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--prefix", prefix, "Id prefix");
  synth->add_option("--out", out, "Output canonical JSONL")->required();

  bool dump_defaults = false;
  auto* cfg_cmd = app.add_subcommand("config", "Print the effective run config");
  add_config_flag(cfg_cmd, o);
  cfg_cmd->add_flag("--defaults", dump_defaults, "Ignore --config and print the defaults");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(in, format, out);
    if (*train_cmd) return cmd_train(o, train_path, valid_path, out_dir);
    if (*gen) return cmd_generate(o, checkpoint, in, out);
    if (*perturb) return cmd_perturb(o, in, out, checkpoint);
    if (*score) return cmd_score(hyp, ref, axes, per_example, out);
    if (*agree) return cmd_agree(judgments, side, rule, out);
    if (*compare) return cmd_compare(a_path, b_path, judgments, metric, axis, rule, out);
    if (*grad) return cmd_gradcheck(o, tol, batch, inject, out);
    if (*sweep) return cmd_sweep(o, sweep_lb, sweep_ls, sweep_m, sweep_strategy, out_dir);
    if (*pipeline) return cmd_pipeline(o, out_dir);
    if (*synth) return cmd_synth(count, synth_seed, prefix, out);
    if (*cfg_cmd) {
      std::cout << dump_config(dump_defaults ? RunConfig{} : resolve_config(o));
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "dcl: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
