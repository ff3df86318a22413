#pragma once

// NLL + in-batch contrastive + per-sample contrastive objective.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcl/backend.hpp"
#include "dcl/common.hpp"

namespace dcl {

struct LossConfig {
  double tau_b = 0.1;
  double tau_s = 2.5;
  double lambda_b = 0.5;
  double lambda_s = 0.5;

  void validate() const {
    if (!(tau_b > 0.0) || !(tau_s > 0.0)) throw std::invalid_argument("loss: temperatures must be positive");
    if (lambda_b < 0.0 || lambda_s < 0.0) throw std::invalid_argument("loss: coefficients must be non-negative");
  }
};

/// One training example in token-id form. `answer` excludes EOS.
struct EncodedExample {
  std::string id;
  std::vector<TokenId> input;
  std::vector<TokenId> answer;
  std::vector<std::vector<TokenId>> negatives;
};

inline std::vector<TokenId> with_eos(std::span<const TokenId> answer) {
  std::vector<TokenId> out(answer.begin(), answer.end());
  out.push_back(Vocabulary::kEos);
  return out;
}

// ---------------------------------------------------------------------------
// Cosine InfoNCE on raw vectors

using Vec = std::vector<double>;

struct CosineGrad {
  double value = 0.0;
  Vec du;
  Vec dv;
};

/// cos(u, v) and its gradient with respect to both arguments.
inline CosineGrad cosine_with_grad(std::span<const double> u, std::span<const double> v) {
  const double nu = l2_norm(u), nv = l2_norm(v);
  if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine of a zero vector");
  double dot = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) dot += u[k] * v[k];
  CosineGrad g;
  g.value = dot / (nu * nv);
  g.du.resize(u.size());
  g.dv.resize(v.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    g.du[k] = v[k] / (nu * nv) - g.value * u[k] / (nu * nu);
    g.dv[k] = u[k] / (nu * nv) - g.value * v[k] / (nv * nv);
  }
  return g;
}

inline double cosine(std::span<const double> u, std::span<const double> v) {
  return cosine_with_grad(u, v).value;
}

struct SampleLoss {
  double value = 0.0;
  Vec grad_x;
  Vec grad_pos;
  std::vector<Vec> grad_negs;
};

/// -log softmax of the positive among {positive} u negatives, similarities scaled by 1/tau.
inline SampleLoss cl_sample_loss(std::span<const double> h_x, std::span<const double> h_pos,
                                 const std::vector<Vec>& h_negs, double tau) {
  if (h_negs.empty()) throw std::invalid_argument("cl_sample_loss: needs at least one negative");
  if (!(tau > 0.0)) throw std::invalid_argument("cl_sample_loss: temperature must be positive");
  if (l2_norm(h_x) == 0.0) throw std::invalid_argument("cl_sample_loss: h_X is the zero vector");
  if (l2_norm(h_pos) == 0.0) throw std::invalid_argument("cl_sample_loss: positive is the zero vector");
  for (std::size_t i = 0; i < h_negs.size(); ++i)
    if (l2_norm(h_negs[i]) == 0.0)
      throw std::invalid_argument("cl_sample_loss: negative " + std::to_string(i) + " is the zero vector");

  std::vector<CosineGrad> sims;
  sims.push_back(cosine_with_grad(h_x, h_pos));
  for (const auto& n : h_negs) sims.push_back(cosine_with_grad(h_x, n));
  Vec logits(sims.size());
  for (std::size_t i = 0; i < sims.size(); ++i) logits[i] = sims[i].value / tau;
  const double lse = logsumexp(logits);

  SampleLoss out;
  out.value = lse - logits[0];
  out.grad_x.assign(h_x.size(), 0.0);
  for (std::size_t i = 0; i < sims.size(); ++i) {
    const double dlogit = std::exp(logits[i] - lse) - (i == 0 ? 1.0 : 0.0);
    const double dsim = dlogit / tau;
    for (std::size_t k = 0; k < h_x.size(); ++k) out.grad_x[k] += dsim * sims[i].du[k];
    Vec dv(sims[i].dv.size());
    for (std::size_t k = 0; k < dv.size(); ++k) dv[k] = dsim * sims[i].dv[k];
    if (i == 0) out.grad_pos = std::move(dv);
    else out.grad_negs.push_back(std::move(dv));
  }
  return out;
}

struct BatchLoss {
  double value = 0.0;
  std::vector<Vec> grad_x;
  std::vector<Vec> grad_a;
};

/// Sum over i of -log softmax_j(sim(h_X_i, h_A_j)/tau) at j = i. The positive stays in the denominator.
inline BatchLoss cl_batch_loss(const std::vector<Vec>& h_x, const std::vector<Vec>& h_a, double tau) {
  const std::size_t n = h_x.size();
  if (n != h_a.size()) throw std::invalid_argument("cl_batch_loss: mismatched pair lists");
  if (n < 2) throw std::invalid_argument("cl_batch_loss: batch size must be at least 2");
  if (!(tau > 0.0)) throw std::invalid_argument("cl_batch_loss: temperature must be positive");
  for (std::size_t i = 0; i < n; ++i) {
    if (l2_norm(h_x[i]) == 0.0) throw std::invalid_argument("cl_batch_loss: h_X " + std::to_string(i) + " is zero");
    if (l2_norm(h_a[i]) == 0.0) throw std::invalid_argument("cl_batch_loss: h_A " + std::to_string(i) + " is zero");
  }
  BatchLoss out;
  out.grad_x.assign(n, Vec(h_x[0].size(), 0.0));
  out.grad_a.assign(n, Vec(h_a[0].size(), 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<CosineGrad> sims;
    Vec logits(n);
    for (std::size_t j = 0; j < n; ++j) {
      sims.push_back(cosine_with_grad(h_x[i], h_a[j]));
      logits[j] = sims[j].value / tau;
    }
    const double lse = logsumexp(logits);
    out.value += lse - logits[i];
    for (std::size_t j = 0; j < n; ++j) {
      const double dsim = (std::exp(logits[j] - lse) - (i == j ? 1.0 : 0.0)) / tau;
      for (std::size_t k = 0; k < h_x[i].size(); ++k) {
        out.grad_x[i][k] += dsim * sims[j].du[k];
        out.grad_a[j][k] += dsim * sims[j].dv[k];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backend-level losses

template <ModelBackend B>
struct LossBreakdown {
  double nll = 0.0;   // mean over the batch of per-example token sums
  double cl_b = 0.0;  // cl_batch_loss / B
  double cl_s = 0.0;  // mean over the batch of cl_sample_loss
  double total = 0.0;
  typename B::Gradients grads;
};

template <ModelBackend B>
std::pair<double, typename B::Gradients> nll_loss(const B& backend, const EncodedExample& ex) {
  if (ex.answer.empty()) throw std::invalid_argument("nll_loss: empty answer in example '" + ex.id + "'");
  auto g = backend.zero_gradients();
  const double v = backend.sequence_nll(ex.input, with_eos(ex.answer), &g, 1.0);
  return {v, std::move(g)};
}

/// Contrastive terms only run when their coefficient is positive. A batch of one
/// has no in-batch negatives, so its cl_b is 0.
template <ModelBackend B>
LossBreakdown<B> total_loss(const B& backend, std::span<const EncodedExample> batch, const LossConfig& cfg,
                            bool want_grads = true) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  LossBreakdown<B> out;
  out.grads = backend.zero_gradients();
  auto* g = want_grads ? &out.grads : nullptr;
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  for (const auto& ex : batch) {
    if (ex.answer.empty()) throw std::invalid_argument("total_loss: empty answer in example '" + ex.id + "'");
    out.nll += inv_n * backend.sequence_nll(ex.input, with_eos(ex.answer), g, inv_n);
  }

  auto pooled_nonzero = [&](std::span<const TokenId> toks, const std::string& what) {
    auto v = backend.pooled(toks);
    if (l2_norm(v) == 0.0) throw std::invalid_argument("total_loss: zero representation for " + what);
    return v;
  };

  if (cfg.lambda_b > 0.0 && batch.size() >= 2) {
    std::vector<Vec> hx, ha;
    for (const auto& ex : batch) {
      hx.push_back(pooled_nonzero(ex.input, "h_X of '" + ex.id + "'"));
      ha.push_back(pooled_nonzero(ex.answer, "gold answer of '" + ex.id + "'"));
    }
    auto bl = cl_batch_loss(hx, ha, cfg.tau_b);
    out.cl_b = bl.value * inv_n;
    if (g) {
      const double w = cfg.lambda_b * inv_n;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        backend.pooled_backward(batch[i].input, bl.grad_x[i], *g, w);
        backend.pooled_backward(batch[i].answer, bl.grad_a[i], *g, w);
      }
    }
  }

  if (cfg.lambda_s > 0.0) {
    for (const auto& ex : batch) {
      if (ex.negatives.empty())
        throw std::invalid_argument("total_loss: example '" + ex.id + "' has no negatives while lambda_s > 0");
      const auto hx = pooled_nonzero(ex.input, "h_X of '" + ex.id + "'");
      const auto hp = pooled_nonzero(ex.answer, "gold answer of '" + ex.id + "'");
      std::vector<Vec> hn;
      for (std::size_t k = 0; k < ex.negatives.size(); ++k)
        hn.push_back(pooled_nonzero(ex.negatives[k], "negative " + std::to_string(k) + " of '" + ex.id + "'"));
      auto sl = cl_sample_loss(hx, hp, hn, cfg.tau_s);
      out.cl_s += inv_n * sl.value;
      if (g) {
        const double w = cfg.lambda_s * inv_n;
        backend.pooled_backward(ex.input, sl.grad_x, *g, w);
        backend.pooled_backward(ex.answer, sl.grad_pos, *g, w);
        for (std::size_t k = 0; k < ex.negatives.size(); ++k)
          backend.pooled_backward(ex.negatives[k], sl.grad_negs[k], *g, w);
      }
    }
  }

  out.total = out.nll + cfg.lambda_b * out.cl_b + cfg.lambda_s * out.cl_s;
  if (!std::isfinite(out.total)) throw std::runtime_error("total_loss: non-finite loss");
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gate

struct GradientMismatch {
  std::string parameter;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  double abs_error = 0.0;
};

struct FiniteDiffReport {
  bool passed = true;
  std::size_t checked = 0;
  std::size_t total_parameters = 0;
  double max_rel_error = 0.0;
  std::vector<GradientMismatch> failures;
  std::vector<GradientMismatch> worst;  // largest relative errors, descending
};

struct FiniteDiffOptions {
  double h = 1e-5;
  double tol = 1e-4;
  double abs_floor = 1e-7;
  std::size_t full_check_limit = 10000;
  std::size_t sample_size = 1000;
  std::uint64_t seed = 0;
  std::size_t report_worst = 10;
};

/// Compares analytic gradients of total_loss against central differences.
/// `tamper` may modify the analytic gradient before comparison (fault injection).
template <ModelBackend B>
FiniteDiffReport finite_diff_check(B backend, std::span<const EncodedExample> batch, const LossConfig& cfg,
                                   const FiniteDiffOptions& opt = {},
                                   const std::function<void(typename B::Gradients&)>& tamper = {}) {
  auto analytic = total_loss(backend, batch, cfg, true).grads;
  if (tamper) tamper(analytic);

  const std::size_t n = backend.parameter_count();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n > opt.full_check_limit) {
    Rng rng(opt.seed);
    shuffle_in_place(idx, rng);
    idx.resize(std::min(opt.sample_size, n));
    std::sort(idx.begin(), idx.end());
  }

  FiniteDiffReport rep;
  rep.total_parameters = n;
  std::vector<GradientMismatch> all;
  for (std::size_t i : idx) {
    double& p = backend.parameter(i);
    const double orig = p;
    p = orig + opt.h;
    const double up = total_loss(backend, batch, cfg, false).total;
    p = orig - opt.h;
    const double down = total_loss(backend, batch, cfg, false).total;
    p = orig;
    const double numeric = (up - down) / (2.0 * opt.h);
    const double a = analytic.flat(i);
    const double abs_err = std::abs(a - numeric);
    const double scale = std::max(std::abs(a), std::abs(numeric));
    const double rel = scale > 0.0 ? abs_err / scale : 0.0;
    GradientMismatch m{analytic.name(i), a, numeric, rel, abs_err};
    const bool ok = abs_err < opt.abs_floor || rel < opt.tol;
    if (!ok) {
      rep.passed = false;
      rep.failures.push_back(m);
    }
    if (!(abs_err < opt.abs_floor)) rep.max_rel_error = std::max(rep.max_rel_error, rel);
    all.push_back(std::move(m));
    ++rep.checked;
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const GradientMismatch& x, const GradientMismatch& y) { return x.rel_error > y.rel_error; });
  if (all.size() > opt.report_worst) all.resize(opt.report_worst);
  rep.worst = std::move(all);
  return rep;
}

}  // namespace dcl
