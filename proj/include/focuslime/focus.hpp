#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "focuslime/error.hpp"
#include "focuslime/model.hpp"
#include "focuslime/perturb.hpp"
#include "focuslime/segment.hpp"
#include "focuslime/surrogate.hpp"

namespace focuslime {

struct ScoutConfig {
  std::size_t k_paragraphs = 3;
  std::size_t k_sentences = 5;
  std::size_t k_words = 10;
  std::size_t proxy_samples_per_unit = 10;
  std::size_t proxy_samples_cap = 500;
  std::size_t density_floor = 5;  // rho_min: minimum target samples per active feature
  std::size_t max_iter = 3;
  Level deepest = Level::Sentence;

  std::size_t k_for(Level level) const {
    switch (level) {
      case Level::Paragraph: return k_paragraphs;
      case Level::Sentence: return k_sentences;
      case Level::Word: return k_words;
      default: return 1;
    }
  }

  void validate() const {
    require(k_paragraphs >= 1 && k_sentences >= 1 && k_words >= 1,
            ErrorCode::ConfigError, "scout keep counts must be >= 1");
    require(proxy_samples_per_unit >= 1 && proxy_samples_cap >= 2,
            ErrorCode::ConfigError, "scout proxy sample settings must be >= 1");
    require(density_floor >= 1, ErrorCode::ConfigError, "density_floor must be >= 1");
    require(max_iter >= 1, ErrorCode::ConfigError, "max_iter must be >= 1");
    require(deepest != Level::Document, ErrorCode::ConfigError,
            "deepest scouting level must be below document");
  }
};

struct ScoutState {
  std::size_t iteration = 0;
  Level level = Level::Document;
  std::size_t word_coverage = 0;  // candidate units counted as word units
};

enum class ScoutDecision { Stop, Continue };

// STOP when the candidate word coverage fits the density constraint
// (coverage * rho_min <= K_target), the iteration cap is hit, or the deepest
// granularity has been reached.
inline ScoutDecision termination_check(const ScoutState& state, std::size_t k_target,
                                       const ScoutConfig& cfg) {
  if (state.word_coverage * cfg.density_floor <= k_target) return ScoutDecision::Stop;
  if (state.iteration >= cfg.max_iter) return ScoutDecision::Stop;
  if (state.level >= cfg.deepest) return ScoutDecision::Stop;
  return ScoutDecision::Continue;
}

// Top k_t by descending score, ties to earlier document position, returned in
// document order. k_t >= |units| keeps everything.
inline std::vector<Segment> top_k_filter(const std::vector<Segment>& units,
                                         const std::vector<double>& scores,
                                         std::size_t k_t) {
  require(k_t >= 1, ErrorCode::ContractViolation, "top_k_filter: k must be >= 1");
  require(units.size() == scores.size(), ErrorCode::ContractViolation,
          "top_k_filter: units/scores length mismatch");
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(std::min(k_t, units.size()));
  std::sort(order.begin(), order.end());
  std::vector<Segment> kept;
  kept.reserve(order.size());
  for (std::size_t idx : order) kept.push_back(units[idx]);
  return kept;
}

// One segment = one binary feature: unconstrained sampling over the segment
// mask space, proxy queries on the reconstructions, surrogate coefficients
// become the per-unit relevance scores.
inline std::vector<double> proxy_valuation(const Document& doc,
                                           const std::vector<Segment>& units,
                                           const ModelClient& proxy, std::size_t K_p,
                                           std::uint64_t seed, Budget& budget,
                                           const KernelConfig& kernel, double lambda) {
  require(!units.empty(), ErrorCode::ContractViolation, "proxy_valuation: no units");
  const std::size_t m = units.size();
  K_p = std::max<std::size_t>(K_p, 2);

  const std::vector<Mask> segment_masks = sample_unconstrained(m, K_p, seed);
  std::vector<std::string> texts;
  texts.reserve(K_p);
  for (const Mask& segment_mask : segment_masks) {
    Mask word_mask = Mask::all_ones(doc.size());
    for (std::size_t j = 0; j < m; ++j) {
      if (segment_mask.bits[j]) continue;
      for (std::size_t u = units[j].first; u <= units[j].last; ++u) word_mask.bits[u] = 0;
    }
    texts.push_back(render_prompt(apply_mask(word_mask, doc), doc.meta.question));
  }

  BatchResult batch = proxy.batch_query(texts, budget, proxy.spec().endpoint.max_parallel);
  if (!batch.complete()) {
    const BatchItemError& first = batch.first_error();
    fail(first.code, "proxy_valuation: " + first.message);
  }

  const FocusMask all_active = FocusMask::all_active(m);
  std::vector<WeightedSample> samples;
  samples.reserve(K_p);
  for (std::size_t k = 0; k < K_p; ++k) {
    samples.push_back(WeightedSample{segment_masks[k], batch.predictions[k].probability,
                                     kernel_weight(segment_masks[k], all_active, kernel)});
  }
  SurrogateFit fitted = fit(samples, all_active, lambda);
  return fitted.coefficients;
}

struct ScoutIterationTrace {
  Level level = Level::Paragraph;
  std::size_t unit_count = 0;
  std::vector<double> scores;
  std::vector<std::pair<std::size_t, std::size_t>> survivor_spans;  // inclusive
  std::size_t word_coverage = 0;
};

struct ScoutTrace {
  std::vector<ScoutIterationTrace> iterations;
  std::string stop_reason;      // "density" | "max_iter" | "deepest_level" | "budget"
  bool budget_truncated = false;
};

namespace detail {
inline std::size_t coverage(const std::vector<Segment>& segments) {
  std::size_t total = 0;
  for (const Segment& segment : segments) total += segment.width();
  return total;
}

inline FocusMask segments_to_mask(const std::vector<Segment>& segments, std::size_t n) {
  FocusMask mask{std::vector<std::uint8_t>(n, 0)};
  for (const Segment& segment : segments) {
    for (std::size_t u = segment.first; u <= segment.last; ++u) mask.bits[u] = 1;
  }
  return mask;
}
}  // namespace detail

// Phase I: init -> hierarchical decomposition -> proxy valuation -> top-k
// filtering -> termination check, looped until the density constraint or a
// stop condition fires. Never returns an empty mask; on budget exhaustion the
// mask from the last completed iteration is returned with a warning flag.
inline FocusMask scout(const Document& doc, const ModelClient& proxy,
                       std::size_t k_target, const ScoutConfig& cfg, std::uint64_t seed,
                       Budget& proxy_budget, ScoutTrace* trace_out = nullptr) {
  require(doc.size() >= 1, ErrorCode::ContractViolation, "scout: empty document");
  cfg.validate();

  ScoutTrace trace;
  std::vector<Segment> candidates{Segment{Level::Document, 0, doc.size() - 1, {}}};
  Level level = Level::Document;
  std::size_t t = 0;
  KernelConfig kernel;  // proxy valuation uses the default kernel over unit space
  const double lambda = 1e-3;

  while (true) {
    ++t;
    const Level next = static_cast<Level>(static_cast<int>(level) + 1);
    std::vector<Segment> units;
    for (const Segment& candidate : candidates) {
      std::vector<Segment> parts = decompose(doc, candidate, next);
      units.insert(units.end(), parts.begin(), parts.end());
    }

    const std::size_t K_p =
        std::min(cfg.proxy_samples_per_unit * units.size(), cfg.proxy_samples_cap);
    std::vector<double> scores;
    try {
      scores = proxy_valuation(doc, units, proxy, K_p, derive_seed(seed, t),
                               proxy_budget, kernel, lambda);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::BudgetExhausted) throw;
      trace.budget_truncated = true;
      trace.stop_reason = "budget";
      break;
    }

    std::vector<Segment> survivors = top_k_filter(units, scores, cfg.k_for(next));
    candidates = std::move(survivors);
    level = next;

    ScoutIterationTrace iteration;
    iteration.level = level;
    iteration.unit_count = units.size();
    iteration.scores = scores;
    for (const Segment& segment : candidates) {
      iteration.survivor_spans.emplace_back(segment.first, segment.last);
    }
    iteration.word_coverage = detail::coverage(candidates);
    trace.iterations.push_back(std::move(iteration));

    ScoutState state{t, level, detail::coverage(candidates)};
    if (termination_check(state, k_target, cfg) == ScoutDecision::Stop) {
      if (state.word_coverage * cfg.density_floor <= k_target) {
        trace.stop_reason = "density";
      } else if (state.level >= cfg.deepest) {
        trace.stop_reason = "deepest_level";
      } else {
        trace.stop_reason = "max_iter";
      }
      break;
    }
  }

  FocusMask mask = detail::segments_to_mask(candidates, doc.size());
  if (mask.n_active() == 0) mask = FocusMask::all_active(doc.size());
  if (trace_out) *trace_out = std::move(trace);
  return mask;
}

enum class Method { Focus, Lime, ProxyOnly, FocusNoProxy };

inline const char* to_string(Method method) {
  switch (method) {
    case Method::Focus: return "focus";
    case Method::Lime: return "lime";
    case Method::ProxyOnly: return "proxy-only";
    case Method::FocusNoProxy: return "focus-no-proxy";
  }
  return "unknown";
}

inline Method method_from_string(const std::string& name) {
  if (name == "focus") return Method::Focus;
  if (name == "lime") return Method::Lime;
  if (name == "proxy-only") return Method::ProxyOnly;
  if (name == "focus-no-proxy") return Method::FocusNoProxy;
  fail(ErrorCode::ConfigError, "unknown method '" + name + "'");
}

struct Explanation {
  Attribution attribution;
  FocusMask focus;
  ScoutTrace scout_trace;
  SurrogateFit fit;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t k_target = 0;
  std::size_t samples_used = 0;
  bool truncated = false;  // fitted on a budget-limited sample prefix
  std::uint64_t proxy_tokens = 0;
  std::uint64_t target_tokens = 0;
  std::uint64_t target_tokens_phase1 = 0;
};

namespace detail {
constexpr std::uint64_t kScrutinizeStream = 1u << 20;
}

// Phase II: constrained sampling -> batched target queries -> kernel weights
// -> ridge fit on the active coordinates -> attribution with frozen zeros.
inline Explanation scrutinize(const Document& doc, const FocusMask& focus,
                              const ModelClient& model, std::size_t K,
                              std::uint64_t seed, Budget& budget,
                              const KernelConfig& kernel, double lambda,
                              std::size_t max_features = 0) {
  require(focus.size() == doc.size(), ErrorCode::ContractViolation,
          "scrutinize: focus mask length mismatch");
  require(focus.n_active() >= 1, ErrorCode::DegenerateFocus,
          "scrutinize: focus mask has no active bits");
  require(K >= 2, ErrorCode::InsufficientSamples, "scrutinize: K must be >= 2");
  kernel.validate();

  std::vector<Mask> masks = sample_constrained(focus, K, seed);
  std::vector<std::string> texts;
  texts.reserve(K);
  for (const Mask& mask : masks) {
    texts.push_back(render_prompt(apply_mask(mask, doc), doc.meta.question));
  }

  BatchResult batch = model.batch_query(texts, budget, model.spec().endpoint.max_parallel);
  bool truncated = false;
  if (!batch.complete()) {
    const BatchItemError& first = batch.first_error();
    const std::size_t needed = std::max<std::size_t>(2, focus.n_active() + 1);
    if (first.code == ErrorCode::BudgetExhausted && batch.predictions.size() >= needed) {
      truncated = true;
      masks.resize(batch.predictions.size());
    } else {
      fail(first.code, "scrutinize: " + first.message);
    }
  }

  std::vector<WeightedSample> samples;
  samples.reserve(masks.size());
  for (std::size_t k = 0; k < masks.size(); ++k) {
    samples.push_back(WeightedSample{masks[k], batch.predictions[k].probability,
                                     kernel_weight(masks[k], focus, kernel)});
  }

  Explanation explanation;
  explanation.fit = fit(samples, focus, lambda, max_features);
  explanation.attribution = to_attribution(explanation.fit, focus);
  explanation.focus = focus;
  explanation.seed = seed;
  explanation.samples_used = masks.size();
  explanation.truncated = truncated;
  return explanation;
}

struct ExplainParams {
  Method method = Method::Focus;
  ScoutConfig scout;
  KernelConfig kernel;
  double lambda = 1e-3;
  std::size_t max_features = 0;
  std::uint64_t seed = 0;
};

// End-to-end pipeline. Phase I consumes only proxy budget; "lime" and the
// "focus-no-proxy" ablation run Phase II over an all-ones focus mask;
// "proxy-only" scrutinizes with the proxy model over the full space.
inline Explanation explain(const Document& doc, const ModelClient& target,
                           const ModelClient& proxy, Budget& target_budget,
                           Budget& proxy_budget, const ExplainParams& params) {
  require(doc.size() >= 1, ErrorCode::ContractViolation, "explain: empty document");
  const std::string full_prompt =
      render_prompt(apply_mask(Mask::all_ones(doc.size()), doc), doc.meta.question);
  const std::uint64_t prompt_cost = cost(full_prompt);

  if (params.method == Method::ProxyOnly) {
    const std::size_t K = k_max(proxy_budget, proxy.spec(), prompt_cost);
    require(K >= 2, ErrorCode::BudgetExhausted,
            "explain: proxy budget below two queries at full prompt cost");
    const std::uint64_t before = proxy_budget.consumed();
    Explanation explanation = scrutinize(
        doc, FocusMask::all_active(doc.size()), proxy, K,
        derive_seed(params.seed, detail::kScrutinizeStream), proxy_budget, params.kernel,
        params.lambda, params.max_features);
    explanation.method = to_string(params.method);
    explanation.seed = params.seed;
    explanation.k_target = K;
    explanation.proxy_tokens = proxy_budget.consumed() - before;
    return explanation;
  }

  const std::size_t k_target = k_max(target_budget, target.spec(), prompt_cost);
  require(k_target >= 2, ErrorCode::BudgetExhausted,
          "explain: target budget below two queries at full prompt cost");

  FocusMask focus = FocusMask::all_active(doc.size());
  ScoutTrace trace;
  std::uint64_t proxy_before = proxy_budget.consumed();
  std::uint64_t target_before_phase2 = target_budget.consumed();
  const std::uint64_t target_at_entry = target_budget.consumed();
  if (params.method == Method::Focus) {
    focus = scout(doc, proxy, k_target, params.scout, params.seed, proxy_budget, &trace);
    target_before_phase2 = target_budget.consumed();
  }

  Explanation explanation =
      scrutinize(doc, focus, target, k_target,
                 derive_seed(params.seed, detail::kScrutinizeStream), target_budget,
                 params.kernel, params.lambda, params.max_features);
  explanation.method = to_string(params.method);
  explanation.seed = params.seed;
  explanation.k_target = k_target;
  explanation.scout_trace = std::move(trace);
  explanation.proxy_tokens = proxy_budget.consumed() - proxy_before;
  explanation.target_tokens = target_budget.consumed() - target_before_phase2;
  explanation.target_tokens_phase1 = target_before_phase2 - target_at_entry;
  return explanation;
}

}  // namespace focuslime
