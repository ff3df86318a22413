#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dcl/common.hpp"
#include "dcl/text.hpp"

namespace dcl {

using TokenId = int;

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kMask = 4;
  static constexpr int kNumSpecials = 5;

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// Specials take ids 0..4; the given tokens follow in order, duplicates skipped.
  explicit Vocabulary(const std::vector<std::string>& tokens) {
    for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>", "<mask>"}) add(s);
    for (const auto& t : tokens) add(t);
  }

  /// Sorted vocabulary over every token of the given texts.
  static Vocabulary build(const std::vector<std::string>& texts) {
    std::set<std::string> all;
    for (const auto& t : texts)
      for (auto& tok : tokenize(t)) all.insert(std::move(tok));
    return Vocabulary(std::vector<std::string>(all.begin(), all.end()));
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  TokenId id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& tok) const { return ids_.count(tok) != 0; }

  static bool is_special(TokenId id) { return id < kNumSpecials; }

  std::vector<TokenId> encode(const TokenSequence& toks) const {
    std::vector<TokenId> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }

  std::vector<TokenId> encode_text(std::string_view text) const { return encode(tokenize(text)); }

  std::string decode(std::span<const TokenId> ids) const {
    TokenSequence toks;
    for (TokenId i : ids) toks.push_back(token(i));
    return join(toks);
  }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

private:
  void add(const std::string& t) {
    if (ids_.count(t)) return;
    ids_[t] = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(t);
  }

  std::vector<std::string> tokens_;
  std::map<std::string, TokenId> ids_;
};

// ---------------------------------------------------------------------------

class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::vector<double> log_softmax(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

inline double logsumexp(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  return mx + std::log(s);
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

struct Embedding {
  std::vector<double> vector;
  bool zero = false;  // the pooled representation was the zero vector
};

enum class MaskCondition { with_context, answer_only };

struct Capabilities {
  bool next_token_log_probs = true;
  bool embed_text = true;
  bool masked_logits = true;
  bool trainable = true;
};

// ---------------------------------------------------------------------------
// Backend contract consumed by the objective, negatives and trainer.

template <typename G>
concept GradientContainer = requires(G g, const G cg, std::size_t i) {
  { cg.size() } -> std::convertible_to<std::size_t>;
  { g.flat(i) } -> std::same_as<double&>;
  { cg.name(i) } -> std::convertible_to<std::string>;
  g.add_scaled(cg, 1.0);
};

template <typename B>
concept ModelBackend = requires(const B cb, B b, std::span<const TokenId> toks, std::vector<double> vec,
                                typename B::Gradients g, std::size_t i) {
  requires GradientContainer<typename B::Gradients>;
  { cb.vocab() } -> std::convertible_to<const Vocabulary&>;
  { cb.capabilities() } -> std::same_as<Capabilities>;
  { cb.next_token_log_probs(toks, toks) } -> std::same_as<std::vector<double>>;
  { cb.embed_text(toks) } -> std::same_as<Embedding>;
  { cb.pooled(toks) } -> std::same_as<std::vector<double>>;
  cb.pooled_backward(toks, std::span<const double>(vec), g, 1.0);
  { cb.sequence_nll(toks, toks, &g, 1.0) } -> std::same_as<double>;
  { cb.masked_logits(toks, i, MaskCondition::answer_only, toks) } -> std::same_as<std::vector<double>>;
  { cb.zero_gradients() } -> std::same_as<typename B::Gradients>;
  b.apply_gradients(g, 1.0);
  { cb.parameter_count() } -> std::convertible_to<std::size_t>;
  { b.parameter(i) } -> std::same_as<double&>;
};

// ---------------------------------------------------------------------------
// ToyBackend
//
//   c(X)      = mean_{x in X} E[x]                (zero when X is empty)
//   p(a_<j)   = mean over E[BOS], E[a_1..a_{j-1}]
//   s_j       = (c + p) / 2
//   logits_j  = U s_j + b
//   embed(T)  = normalize(mean_{t in T} E[t])

struct ToyParameters {
  Matrix E;  // |V| x d
  Matrix U;  // |V| x d
  std::vector<double> b;

  std::size_t size() const { return E.data().size() + U.data().size() + b.size(); }

  double& flat(std::size_t i) {
    if (i < E.data().size()) return E.data()[i];
    i -= E.data().size();
    if (i < U.data().size()) return U.data()[i];
    return b.at(i - U.data().size());
  }
  double flat(std::size_t i) const { return const_cast<ToyParameters*>(this)->flat(i); }

  std::string name(std::size_t i) const {
    const std::size_t d = E.cols();
    if (i < E.data().size()) return "E[" + std::to_string(i / d) + "," + std::to_string(i % d) + "]";
    i -= E.data().size();
    if (i < U.data().size()) return "U[" + std::to_string(i / d) + "," + std::to_string(i % d) + "]";
    return "b[" + std::to_string(i - U.data().size()) + "]";
  }

  void add_scaled(const ToyParameters& o, double s) {
    if (o.size() != size()) throw std::invalid_argument("gradient shape mismatch");
    for (std::size_t i = 0; i < E.data().size(); ++i) E.data()[i] += s * o.E.data()[i];
    for (std::size_t i = 0; i < U.data().size(); ++i) U.data()[i] += s * o.U.data()[i];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += s * o.b[i];
  }

  bool operator==(const ToyParameters&) const = default;
};

class ToyBackend {
public:
  using Gradients = ToyParameters;

  ToyBackend() = default;

  /// Uniform [-0.1, 0.1] initialisation from the seeded generator.
  ToyBackend(Vocabulary vocab, std::size_t dim, std::uint64_t seed) : vocab_(std::move(vocab)), seed_(seed) {
    allocate(dim);
    Rng rng(seed);
    auto draw = [&] { return -0.1 + 0.2 * uniform01(rng); };
    for (auto& v : params_.E.data()) v = draw();
    for (auto& v : params_.U.data()) v = draw();
    for (auto& v : params_.b) v = draw();
  }

  static ToyBackend zeros(Vocabulary vocab, std::size_t dim) {
    ToyBackend t;
    t.vocab_ = std::move(vocab);
    t.allocate(dim);
    return t;
  }

  static ToyBackend restore(Vocabulary vocab, ToyParameters params, std::uint64_t seed) {
    ToyBackend t = zeros(std::move(vocab), params.E.cols());
    if (params.size() != t.params_.size()) throw std::invalid_argument("restore: parameter shapes do not match");
    t.params_ = std::move(params);
    t.seed_ = seed;
    return t;
  }

  const Vocabulary& vocab() const { return vocab_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  std::size_t dim() const { return params_.E.cols(); }
  std::uint64_t seed() const { return seed_; }
  Capabilities capabilities() const { return {}; }

  ToyParameters& params() { return params_; }
  const ToyParameters& params() const { return params_; }

  std::size_t parameter_count() const { return params_.size(); }
  double& parameter(std::size_t i) { return params_.flat(i); }
  std::string parameter_name(std::size_t i) const { return params_.name(i); }

  Gradients zero_gradients() const {
    Gradients g;
    g.E = Matrix(params_.E.rows(), params_.E.cols());
    g.U = Matrix(params_.U.rows(), params_.U.cols());
    g.b.assign(params_.b.size(), 0.0);
    return g;
  }

  /// Mean of E rows over the tokens; zero vector for an empty sequence.
  std::vector<double> pooled(std::span<const TokenId> toks) const {
    std::vector<double> m(dim(), 0.0);
    if (toks.empty()) return m;
    for (TokenId t : toks) {
      const auto r = params_.E.row(checked(t));
      for (std::size_t k = 0; k < m.size(); ++k) m[k] += r[k];
    }
    const double inv = 1.0 / static_cast<double>(toks.size());
    for (auto& v : m) v *= inv;
    return m;
  }

  /// Accumulates scale * dL/dE given dL/d(pooled(toks)).
  void pooled_backward(std::span<const TokenId> toks, std::span<const double> grad, Gradients& g,
                       double scale) const {
    if (toks.empty()) return;
    const double w = scale / static_cast<double>(toks.size());
    for (TokenId t : toks) {
      auto r = g.E.row(checked(t));
      for (std::size_t k = 0; k < r.size(); ++k) r[k] += w * grad[k];
    }
  }

  Embedding embed_text(std::span<const TokenId> toks) const {
    Embedding e{pooled(toks), false};
    const double n = l2_norm(e.vector);
    if (n == 0.0) {
      e.zero = true;
      return e;
    }
    for (auto& v : e.vector) v /= n;
    return e;
  }

  std::vector<double> next_token_log_probs(std::span<const TokenId> input, std::span<const TokenId> prefix) const {
    return log_softmax(logits(state(pooled(input), prefix)));
  }

  /// -sum_j log p(a_j | a_<j, X) over the given answer ids (caller appends EOS).
  /// When grads is non-null, accumulates scale * gradient.
  double sequence_nll(std::span<const TokenId> input, std::span<const TokenId> answer, Gradients* grads,
                      double scale) const {
    const std::size_t d = dim();
    const auto c = pooled(input);
    std::vector<double> prefix_sum(params_.E.row(Vocabulary::kBos).begin(), params_.E.row(Vocabulary::kBos).end());
    std::vector<double> dc(d, 0.0);
    std::vector<double> dprefix_total(d, 0.0);  // sum over steps of dL/dp_j / (j+1), applied to BOS
    std::vector<double> s(d), ds(d), p(d);
    double loss = 0.0;

    // Per-step prefix gradients: token a_l (l < j) receives dL/dp_j / (j+1).
    // suffix accumulation lets each answer token collect its share in one pass.
    std::vector<std::vector<double>> dp_scaled;
    if (grads) dp_scaled.reserve(answer.size());

    for (std::size_t j = 0; j < answer.size(); ++j) {
      const double cnt = static_cast<double>(j + 1);
      for (std::size_t k = 0; k < d; ++k) {
        p[k] = prefix_sum[k] / cnt;
        s[k] = 0.5 * (c[k] + p[k]);
      }
      auto z = logits(s);
      const auto lp = log_softmax(z);
      const auto target = checked(answer[j]);
      loss -= lp[target];
      if (grads) {
        std::fill(ds.begin(), ds.end(), 0.0);
        for (std::size_t v = 0; v < lp.size(); ++v) {
          const double dz = (std::exp(lp[v]) - (v == target ? 1.0 : 0.0)) * scale;
          if (dz == 0.0) continue;
          grads->b[v] += dz;
          auto urow = params_.U.row(v);
          auto gurow = grads->U.row(v);
          for (std::size_t k = 0; k < d; ++k) {
            gurow[k] += dz * s[k];
            ds[k] += dz * urow[k];
          }
        }
        std::vector<double> dpj(d);
        for (std::size_t k = 0; k < d; ++k) {
          dc[k] += 0.5 * ds[k];
          dpj[k] = 0.5 * ds[k] / cnt;
          dprefix_total[k] += dpj[k];
        }
        dp_scaled.push_back(std::move(dpj));
      }
      const auto r = params_.E.row(checked(answer[j]));
      for (std::size_t k = 0; k < d; ++k) prefix_sum[k] += r[k];
    }

    if (grads) {
      auto bos = grads->E.row(Vocabulary::kBos);
      for (std::size_t k = 0; k < d; ++k) bos[k] += dprefix_total[k];
      // a_l appears in the prefixes of steps l+1..end.
      std::vector<double> tail(d, 0.0);
      for (std::size_t j = answer.size(); j-- > 1;) {
        for (std::size_t k = 0; k < d; ++k) tail[k] += dp_scaled[j][k];
        auto row = grads->E.row(checked(answer[j - 1]));
        for (std::size_t k = 0; k < d; ++k) row[k] += tail[k];
      }
      pooled_backward(input, dc, *grads, 1.0);
    }
    return loss;
  }

  /// Log-distribution for the token at `position` of `tokens`, which is masked out.
  /// with_context prepends `context` to the window.
  std::vector<double> masked_logits(std::span<const TokenId> tokens, std::size_t position, MaskCondition condition,
                                    std::span<const TokenId> context = {}) const {
    if (position >= tokens.size()) throw std::out_of_range("masked_logits: position out of range");
    std::vector<TokenId> window;
    if (condition == MaskCondition::with_context) window.assign(context.begin(), context.end());
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (i != position) window.push_back(tokens[i]);
    const auto h = pooled(window);
    return log_softmax(logits(h));
  }

  void apply_gradients(const Gradients& g, double lr) {
    if (g.E.rows() != params_.E.rows() || g.E.cols() != params_.E.cols() || g.U.rows() != params_.U.rows() ||
        g.U.cols() != params_.U.cols() || g.b.size() != params_.b.size())
      throw std::invalid_argument("apply_gradients: gradient shape does not match parameters");
    params_.add_scaled(g, -lr);
  }

  bool operator==(const ToyBackend& o) const {
    return vocab_ == o.vocab_ && params_ == o.params_ && seed_ == o.seed_;
  }

private:
  void allocate(std::size_t dim) {
    if (dim == 0) throw std::invalid_argument("ToyBackend: dimension must be positive");
    params_.E = Matrix(vocab_.size(), dim);
    params_.U = Matrix(vocab_.size(), dim);
    params_.b.assign(vocab_.size(), 0.0);
  }

  std::size_t checked(TokenId t) const {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_.size()) throw std::out_of_range("token id out of range");
    return static_cast<std::size_t>(t);
  }

  std::vector<double> state(const std::vector<double>& c, std::span<const TokenId> prefix) const {
    std::vector<double> p(params_.E.row(Vocabulary::kBos).begin(), params_.E.row(Vocabulary::kBos).end());
    for (TokenId t : prefix) {
      const auto r = params_.E.row(checked(t));
      for (std::size_t k = 0; k < p.size(); ++k) p[k] += r[k];
    }
    const double inv = 1.0 / static_cast<double>(prefix.size() + 1);
    std::vector<double> s(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) s[k] = 0.5 * (c[k] + p[k] * inv);
    return s;
  }

  std::vector<double> logits(std::span<const double> s) const {
    std::vector<double> z(params_.b);
    for (std::size_t v = 0; v < z.size(); ++v) {
      const auto r = params_.U.row(v);
      double acc = 0.0;
      for (std::size_t k = 0; k < s.size(); ++k) acc += r[k] * s[k];
      z[v] += acc;
    }
    return z;
  }

  Vocabulary vocab_;
  ToyParameters params_;
  std::uint64_t seed_ = 0;
};

static_assert(ModelBackend<ToyBackend>);

// ---------------------------------------------------------------------------
// Decoding

enum class DecodeMethod { greedy, top_k };

struct DecodeOptions {
  DecodeMethod method = DecodeMethod::greedy;
  int k = 10;
  std::uint64_t seed = 0;
  std::size_t max_len = 24;
};

/// Token ids ordered by descending log-prob, lowest id first among ties.
inline std::vector<TokenId> ranked_tokens(std::span<const double> logp) {
  std::vector<TokenId> ids(logp.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](TokenId a, TokenId b) {
    return logp[static_cast<std::size_t>(a)] > logp[static_cast<std::size_t>(b)];
  });
  return ids;
}

/// Decodes until EOS or max_len tokens; the returned ids exclude EOS.
template <ModelBackend B>
std::vector<TokenId> generate(const B& backend, std::span<const TokenId> input, const DecodeOptions& opts) {
  if (opts.max_len < 1) throw std::invalid_argument("generate: max_len must be >= 1");
  const auto vsize = backend.vocab().size();
  if (opts.method == DecodeMethod::top_k && (opts.k < 1 || static_cast<std::size_t>(opts.k) > vsize))
    throw std::invalid_argument("generate: k must be in 1..|V|");
  Rng rng(opts.seed);
  std::vector<TokenId> out;
  while (out.size() < opts.max_len) {
    const auto lp = backend.next_token_log_probs(input, out);
    TokenId next;
    if (opts.method == DecodeMethod::greedy) {
      next = ranked_tokens(lp).front();
    } else {
      const auto ranked = ranked_tokens(lp);
      const auto k = static_cast<std::size_t>(opts.k);
      // renormalise over the k best
      const double top = lp[static_cast<std::size_t>(ranked[0])];
      std::vector<double> w(k);
      double total = 0.0;
      for (std::size_t i = 0; i < k; ++i) total += w[i] = std::exp(lp[static_cast<std::size_t>(ranked[i])] - top);
      double u = uniform01(rng) * total;
      next = ranked[k - 1];
      for (std::size_t i = 0; i < k; ++i) {
        if (u < w[i]) {
          next = ranked[i];
          break;
        }
        u -= w[i];
      }
    }
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON container. nlohmann serialises doubles in shortest
// round-trip form, so parameters survive save/load bit-exactly.

inline constexpr std::string_view kCheckpointFormat = "dcl.toy_backend";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_json(const ToyBackend& m, const std::string& config_digest) {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"dim", m.dim()},
          {"seed", m.seed()},
          {"config_digest", config_digest},
          {"vocab", m.vocab().tokens()},
          {"E", m.params().E.data()},
          {"U", m.params().U.data()},
          {"b", m.params().b}};
}

struct LoadedCheckpoint {
  ToyBackend model;
  std::string config_digest;
};

inline LoadedCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kCheckpointFormat) throw ParseError("not a toy backend checkpoint");
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + j.at("version").dump());
  auto tokens = j.at("vocab").get<std::vector<std::string>>();
  if (tokens.size() < Vocabulary::kNumSpecials) throw ParseError("checkpoint vocabulary lacks special tokens");
  Vocabulary vocab(std::vector<std::string>(tokens.begin() + Vocabulary::kNumSpecials, tokens.end()));
  if (vocab.tokens() != tokens) throw ParseError("checkpoint vocabulary is malformed");
  const auto dim = j.at("dim").get<std::size_t>();
  const auto n = vocab.size();
  ToyParameters p;
  p.E = Matrix(n, dim);
  p.U = Matrix(n, dim);
  p.E.data() = j.at("E").get<std::vector<double>>();
  p.U.data() = j.at("U").get<std::vector<double>>();
  p.b = j.at("b").get<std::vector<double>>();
  if (p.E.data().size() != n * dim || p.U.data().size() != n * dim || p.b.size() != n)
    throw ParseError("checkpoint parameter shapes do not match vocabulary and dim");
  auto out = ToyBackend::restore(std::move(vocab), std::move(p), j.at("seed").get<std::uint64_t>());
  return {std::move(out), j.value("config_digest", "")};
}

inline void save_checkpoint(const std::filesystem::path& path, const ToyBackend& m, const std::string& digest) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << checkpoint_json(m, digest).dump() << '\n';
}

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace dcl
