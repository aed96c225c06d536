#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "focuslime/error.hpp"
#include "focuslime/focus.hpp"
#include "focuslime/model.hpp"
#include "focuslime/perturb.hpp"
#include "focuslime/segment.hpp"
#include "focuslime/surrogate.hpp"

namespace focuslime {

// Probability of the example's own answer label; predictions are p(yes).
inline double label_probability(double p_yes, const std::string& answer_label) {
  return answer_label == "no" ? 1.0 - p_yes : p_yes;
}

struct EvalExample {
  const Document* doc = nullptr;
  const Attribution* attribution = nullptr;
};

// x^(k): document with the top-k attributed units removed.
inline std::string delete_top_k(const Document& doc, const Attribution& attribution,
                                std::size_t k) {
  require(attribution.scores.size() == doc.size(), ErrorCode::ContractViolation,
          "delete_top_k: attribution length mismatch");
  Mask mask = Mask::all_ones(doc.size());
  for (std::size_t index : top_k_features(attribution, k)) mask.bits[index] = 0;
  return apply_mask(mask, doc);
}

struct AOPCCurve {
  std::vector<double> per_k;  // per_k[i] = AOPC_{i+1}
  double mean = 0.0;

  double at(std::size_t k) const {
    require(k >= 1 && k <= per_k.size(), ErrorCode::ContractViolation,
            "AOPCCurve::at: k out of range");
    return per_k[k - 1];
  }
};

namespace detail {

inline double prediction_drop(const ModelClient& model, const Document& doc,
                              const Attribution& attribution, std::size_t k,
                              Budget& budget) {
  const std::size_t kk = std::min(k, doc.size());
  const std::string original =
      render_prompt(apply_mask(Mask::all_ones(doc.size()), doc), doc.meta.question);
  const std::string deleted =
      render_prompt(delete_top_k(doc, attribution, kk), doc.meta.question);
  const double p_original =
      label_probability(model.query(original, budget).probability, doc.meta.answer_label);
  if (deleted.empty() || cost(deleted) == 0) {
    // Deleting everything including the question yields the no-answer floor.
    return p_original;
  }
  const double p_deleted =
      label_probability(model.query(deleted, budget).probability, doc.meta.answer_label);
  return p_original - p_deleted;
}

}  // namespace detail

// AOPC_k = mean over examples of p(y|x) - p(y|x^(k)); signed, never clamped.
// Original predictions are served from the client cache across k values.
inline double aopc_k(const ModelClient& model, const std::vector<EvalExample>& examples,
                     std::size_t k, Budget& budget) {
  require(!examples.empty(), ErrorCode::ContractViolation, "aopc_k: empty dataset");
  double total = 0.0;
  for (const EvalExample& example : examples) {
    total += detail::prediction_drop(model, *example.doc, *example.attribution, k, budget);
  }
  return total / static_cast<double>(examples.size());
}

// Full curve for k = 1..k_max_eval (k capped at document length per example);
// the summary AOPC is the arithmetic mean of the stored per-k values.
inline AOPCCurve aopc_summary(const ModelClient& model,
                              const std::vector<EvalExample>& examples, Budget& budget,
                              std::size_t k_max_eval = 100) {
  require(k_max_eval >= 1, ErrorCode::ContractViolation, "aopc_summary: k_max_eval >= 1");
  AOPCCurve curve;
  curve.per_k.reserve(k_max_eval);
  for (std::size_t k = 1; k <= k_max_eval; ++k) {
    curve.per_k.push_back(aopc_k(model, examples, k, budget));
  }
  double total = 0.0;
  for (double value : curve.per_k) total += value;
  curve.mean = total / static_cast<double>(curve.per_k.size());
  return curve;
}

// Word units overlapping any annotated evidence character span.
inline std::vector<std::size_t> evidence_units(const Document& doc) {
  std::vector<std::size_t> units;
  for (const WordUnit& unit : doc.units) {
    for (const EvidenceSpan& span : doc.meta.evidence) {
      if (unit.start < span.end && span.start < unit.end) {
        units.push_back(unit.index);
        break;
      }
    }
  }
  return units;
}

// Recall of evidence words among the top-k attributed words, k = ceil(ratio * e).
inline double recall_at_ratio(const Document& doc, const Attribution& attribution,
                              double ratio) {
  require(ratio > 0.0, ErrorCode::ContractViolation, "recall_at_ratio: ratio must be > 0");
  const std::vector<std::size_t> evidence = evidence_units(doc);
  if (evidence.empty()) {
    fail(ErrorCode::NoEvidence, "recall_at_ratio: document '" + doc.id +
                                    "' has no evidence word units");
  }
  const std::size_t e = evidence.size();
  const std::size_t k =
      static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(e)));
  const std::vector<std::size_t> retrieved = top_k_features(attribution, k);
  std::size_t hits = 0;
  for (std::size_t unit : evidence) {
    if (std::find(retrieved.begin(), retrieved.end(), unit) != retrieved.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(e);
}

struct AlignmentReport {
  std::vector<double> ratios;
  std::vector<double> recalls;        // aggregate means, parallel to ratios
  std::size_t evidence_word_count = 0;
  std::vector<std::size_t> retrieved_sizes;
};

struct NarrowingStep {
  FocusMask mask;
  Attribution attribution;
  AOPCCurve curve;
};

struct NarrowingTrace {
  std::vector<NarrowingStep> steps;
  std::size_t optimal_index = 0;  // argmax of mean AOPC along the path
  bool stopped_early = false;
};

// Greedy neighborhood narrowing: start from the all-active mask; per step fit
// a proxy explanation on the current neighborhood, record the target-model
// AOPC of that attribution, then freeze the active feature with the smallest
// |score| (ties to the latest document position).
inline NarrowingTrace narrowing_study(const Document& doc, const ModelClient& target,
                                      const ModelClient& proxy, std::size_t steps,
                                      std::size_t K_per_step, std::uint64_t seed,
                                      Budget& target_budget, Budget& proxy_budget,
                                      const KernelConfig& kernel = {},
                                      double lambda = 1e-3) {
  require(steps >= 1, ErrorCode::ContractViolation, "narrowing_study: steps must be >= 1");
  require(doc.size() >= 1, ErrorCode::ContractViolation, "narrowing_study: empty document");

  NarrowingTrace trace;
  FocusMask mask = FocusMask::all_active(doc.size());
  for (std::size_t step = 0; step <= steps; ++step) {
    NarrowingStep record;
    record.mask = mask;
    try {
      Explanation explanation =
          scrutinize(doc, mask, proxy, K_per_step, derive_seed(seed, step),
                     proxy_budget, kernel, lambda);
      record.attribution = std::move(explanation.attribution);
      std::vector<EvalExample> single{EvalExample{&doc, &record.attribution}};
      record.curve = aopc_summary(target, single, target_budget,
                                  std::min<std::size_t>(100, mask.n_active()));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::BudgetExhausted) throw;
      trace.stopped_early = true;
      break;
    }
    trace.steps.push_back(std::move(record));

    if (step == steps) break;
    if (mask.n_active() <= 1) {
      trace.stopped_early = true;
      break;
    }
    // Smallest |score| among active coordinates; tie goes to the latest position.
    const Attribution& attribution = trace.steps.back().attribution;
    std::size_t victim = doc.size();
    double best = 0.0;
    for (std::size_t i = 0; i < doc.size(); ++i) {
      if (!mask.bits[i]) continue;
      const double magnitude = std::abs(attribution.scores[i]);
      if (victim == doc.size() || magnitude <= best) {
        victim = i;
        best = magnitude;
      }
    }
    mask.bits[victim] = 0;
  }

  require(!trace.steps.empty(), ErrorCode::BudgetExhausted,
          "narrowing_study: budget exhausted before the first step completed");
  double best_mean = trace.steps[0].curve.mean;
  for (std::size_t i = 1; i < trace.steps.size(); ++i) {
    if (trace.steps[i].curve.mean > best_mean) {
      best_mean = trace.steps[i].curve.mean;
      trace.optimal_index = i;
    }
  }
  return trace;
}

}  // namespace focuslime
