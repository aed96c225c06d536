#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "focuslime/error.hpp"
#include "focuslime/eval.hpp"
#include "focuslime/focus.hpp"
#include "focuslime/model.hpp"
#include "focuslime/surrogate.hpp"

namespace focuslime {
namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& context) {
  require(j.is_object(), ErrorCode::ConfigError, context + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    require(allowed.count(key) != 0, ErrorCode::ConfigError,
            context + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::json synthetic_to_json(const SyntheticModel& model) {
  nlohmann::json j;
  switch (model.kind) {
    case SyntheticModel::Kind::KeywordAnd: j["kind"] = "keyword_and"; break;
    case SyntheticModel::Kind::Clause: j["kind"] = "clause"; break;
    case SyntheticModel::Kind::WeightedLinear: j["kind"] = "weighted_linear"; break;
  }
  j["keywords"] = model.keywords;
  j["p_on"] = model.p_on;
  j["p_off"] = model.p_off;
  j["weights"] = model.weights;
  j["bias"] = model.bias;
  return j;
}

inline SyntheticModel synthetic_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"kind", "keywords", "p_on", "p_off", "weights", "bias"},
                     "synthetic model");
  SyntheticModel model;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "keyword_and") {
    model.kind = SyntheticModel::Kind::KeywordAnd;
  } else if (kind == "clause") {
    model.kind = SyntheticModel::Kind::Clause;
  } else if (kind == "weighted_linear") {
    model.kind = SyntheticModel::Kind::WeightedLinear;
  } else {
    fail(ErrorCode::ConfigError, "unknown synthetic model kind '" + kind + "'");
  }
  detail::read_field(j, "keywords", model.keywords);
  detail::read_field(j, "p_on", model.p_on);
  detail::read_field(j, "p_off", model.p_off);
  if (j.contains("weights")) {
    model.weights = j.at("weights").get<std::map<std::string, double>>();
  }
  detail::read_field(j, "bias", model.bias);
  return model;
}

inline nlohmann::json model_spec_to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["backend"] = spec.backend == Backend::HttpChat ? "http_chat" : "synthetic";
  j["model_id"] = spec.model_id;
  j["endpoint"] = {{"base_url", spec.endpoint.base_url},
                   {"auth_env", spec.endpoint.auth_env},
                   {"timeout_s", spec.endpoint.timeout_s},
                   {"max_parallel", spec.endpoint.max_parallel},
                   {"max_retries", spec.endpoint.max_retries},
                   {"backoff_ms", spec.endpoint.backoff_ms}};
  j["labels"] = {{"yes", spec.labels.yes}, {"no", spec.labels.no}};
  if (spec.synthetic) j["synthetic"] = synthetic_to_json(*spec.synthetic);
  return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j, Role role,
                                      const std::string& context) {
  detail::check_keys(
      j, {"backend", "model_id", "endpoint", "labels", "synthetic", "synthetic_path"},
      context);
  ModelSpec spec;
  spec.role = role;
  const std::string backend = j.at("backend").get<std::string>();
  if (backend == "http_chat") {
    spec.backend = Backend::HttpChat;
  } else if (backend == "synthetic") {
    spec.backend = Backend::Synthetic;
  } else {
    fail(ErrorCode::ConfigError, context + ": unknown backend '" + backend + "'");
  }
  detail::read_field(j, "model_id", spec.model_id);
  if (j.contains("endpoint")) {
    const nlohmann::json& e = j.at("endpoint");
    detail::check_keys(e,
                       {"base_url", "auth_env", "timeout_s", "max_parallel",
                        "max_retries", "backoff_ms"},
                       context + ".endpoint");
    detail::read_field(e, "base_url", spec.endpoint.base_url);
    detail::read_field(e, "auth_env", spec.endpoint.auth_env);
    detail::read_field(e, "timeout_s", spec.endpoint.timeout_s);
    detail::read_field(e, "max_parallel", spec.endpoint.max_parallel);
    detail::read_field(e, "max_retries", spec.endpoint.max_retries);
    detail::read_field(e, "backoff_ms", spec.endpoint.backoff_ms);
  }
  if (j.contains("labels")) {
    const nlohmann::json& l = j.at("labels");
    detail::check_keys(l, {"yes", "no"}, context + ".labels");
    detail::read_field(l, "yes", spec.labels.yes);
    detail::read_field(l, "no", spec.labels.no);
  }
  if (j.contains("synthetic")) {
    spec.synthetic = std::make_shared<SyntheticModel>(synthetic_from_json(j.at("synthetic")));
  } else if (j.contains("synthetic_path")) {
    const std::string path = j.at("synthetic_path").get<std::string>();
    std::ifstream in(path);
    require(in.good(), ErrorCode::ConfigError,
            context + ": cannot open synthetic model file '" + path + "'");
    nlohmann::json def = nlohmann::json::parse(in, nullptr, false);
    require(!def.is_discarded(), ErrorCode::ConfigError,
            context + ": invalid JSON in '" + path + "'");
    spec.synthetic = std::make_shared<SyntheticModel>(synthetic_from_json(def));
  }
  spec.validate();
  return spec;
}

struct EvalConfig {
  std::vector<double> recall_ratios{1.0, 1.5, 2.0};
  std::size_t aopc_k_max = 100;
  std::size_t narrow_steps = 10;
  std::size_t narrow_samples = 200;
};

struct RunConfig {
  ModelSpec target;
  ModelSpec proxy;
  std::uint64_t target_tokens = 0;  // 0 = unlimited
  std::uint64_t proxy_tokens = 0;
  std::uint64_t unlimited_sample_cap = 1000;
  ScoutConfig scout;
  KernelConfig kernel;
  EvalConfig eval;
  double lambda = 1e-3;
  std::size_t max_features = 0;
  std::uint64_t seed = 0;
  int parallelism = 1;
  std::string cache_path;
  std::string out_dir = "out";
  std::optional<std::string> mask_replacement;

  Budget make_target_budget() const { return Budget(target_tokens, unlimited_sample_cap); }
  Budget make_proxy_budget() const { return Budget(proxy_tokens, unlimited_sample_cap); }

  ExplainParams explain_params(Method method) const {
    ExplainParams params;
    params.method = method;
    params.scout = scout;
    params.kernel = kernel;
    params.lambda = lambda;
    params.max_features = max_features;
    params.seed = seed;
    return params;
  }
};

inline Level level_from_string(const std::string& name) {
  if (name == "paragraph") return Level::Paragraph;
  if (name == "sentence") return Level::Sentence;
  if (name == "word") return Level::Word;
  fail(ErrorCode::ConfigError, "unknown level '" + name + "'");
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["target"] = model_spec_to_json(cfg.target);
  j["proxy"] = model_spec_to_json(cfg.proxy);
  j["budget"] = {{"target_tokens", cfg.target_tokens},
                 {"proxy_tokens", cfg.proxy_tokens},
                 {"unlimited_sample_cap", cfg.unlimited_sample_cap}};
  j["scout"] = {{"k_paragraphs", cfg.scout.k_paragraphs},
                {"k_sentences", cfg.scout.k_sentences},
                {"k_words", cfg.scout.k_words},
                {"proxy_samples_per_unit", cfg.scout.proxy_samples_per_unit},
                {"proxy_samples_cap", cfg.scout.proxy_samples_cap},
                {"density_floor", cfg.scout.density_floor},
                {"max_iter", cfg.scout.max_iter},
                {"deepest", to_string(cfg.scout.deepest)}};
  j["kernel"] = {{"sigma", cfg.kernel.sigma}};
  j["eval"] = {{"recall_ratios", cfg.eval.recall_ratios},
               {"aopc_k_max", cfg.eval.aopc_k_max},
               {"narrow_steps", cfg.eval.narrow_steps},
               {"narrow_samples", cfg.eval.narrow_samples}};
  j["lambda"] = cfg.lambda;
  j["max_features"] = cfg.max_features;
  j["seed"] = cfg.seed;
  j["parallelism"] = cfg.parallelism;
  j["cache_path"] = cfg.cache_path;
  j["out_dir"] = cfg.out_dir;
  if (cfg.mask_replacement) {
    j["mask_replacement"] = *cfg.mask_replacement;
  } else {
    j["mask_replacement"] = nullptr;
  }
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"target", "proxy", "budget", "scout", "kernel", "eval", "lambda",
                      "max_features", "seed", "parallelism", "cache_path", "out_dir",
                      "mask_replacement"},
                     "config");
  RunConfig cfg;
  require(j.contains("target") && j.contains("proxy"), ErrorCode::ConfigError,
          "config: 'target' and 'proxy' model specs are required");
  cfg.target = model_spec_from_json(j.at("target"), Role::Target, "config.target");
  cfg.proxy = model_spec_from_json(j.at("proxy"), Role::Proxy, "config.proxy");
  if (j.contains("budget")) {
    const nlohmann::json& b = j.at("budget");
    detail::check_keys(b, {"target_tokens", "proxy_tokens", "unlimited_sample_cap"},
                       "config.budget");
    detail::read_field(b, "target_tokens", cfg.target_tokens);
    detail::read_field(b, "proxy_tokens", cfg.proxy_tokens);
    detail::read_field(b, "unlimited_sample_cap", cfg.unlimited_sample_cap);
  }
  if (j.contains("scout")) {
    const nlohmann::json& s = j.at("scout");
    detail::check_keys(s,
                       {"k_paragraphs", "k_sentences", "k_words", "proxy_samples_per_unit",
                        "proxy_samples_cap", "density_floor", "max_iter", "deepest"},
                       "config.scout");
    detail::read_field(s, "k_paragraphs", cfg.scout.k_paragraphs);
    detail::read_field(s, "k_sentences", cfg.scout.k_sentences);
    detail::read_field(s, "k_words", cfg.scout.k_words);
    detail::read_field(s, "proxy_samples_per_unit", cfg.scout.proxy_samples_per_unit);
    detail::read_field(s, "proxy_samples_cap", cfg.scout.proxy_samples_cap);
    detail::read_field(s, "density_floor", cfg.scout.density_floor);
    detail::read_field(s, "max_iter", cfg.scout.max_iter);
    if (s.contains("deepest")) {
      cfg.scout.deepest = level_from_string(s.at("deepest").get<std::string>());
    }
    cfg.scout.validate();
  }
  if (j.contains("kernel")) {
    detail::check_keys(j.at("kernel"), {"sigma"}, "config.kernel");
    detail::read_field(j.at("kernel"), "sigma", cfg.kernel.sigma);
    cfg.kernel.validate();
  }
  if (j.contains("eval")) {
    const nlohmann::json& e = j.at("eval");
    detail::check_keys(e, {"recall_ratios", "aopc_k_max", "narrow_steps", "narrow_samples"},
                       "config.eval");
    detail::read_field(e, "recall_ratios", cfg.eval.recall_ratios);
    detail::read_field(e, "aopc_k_max", cfg.eval.aopc_k_max);
    detail::read_field(e, "narrow_steps", cfg.eval.narrow_steps);
    detail::read_field(e, "narrow_samples", cfg.eval.narrow_samples);
  }
  detail::read_field(j, "lambda", cfg.lambda);
  detail::read_field(j, "max_features", cfg.max_features);
  detail::read_field(j, "seed", cfg.seed);
  detail::read_field(j, "parallelism", cfg.parallelism);
  detail::read_field(j, "cache_path", cfg.cache_path);
  detail::read_field(j, "out_dir", cfg.out_dir);
  if (j.contains("mask_replacement") && !j.at("mask_replacement").is_null()) {
    cfg.mask_replacement = j.at("mask_replacement").get<std::string>();
  }
  require(cfg.lambda >= 0.0, ErrorCode::ConfigError, "config: lambda must be >= 0");
  require(cfg.parallelism >= 1, ErrorCode::ConfigError, "config: parallelism must be >= 1");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::ConfigError, "cannot open config file '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  require(!j.is_discarded(), ErrorCode::ConfigError, "config file '" + path +
                                                         "' is not valid JSON");
  return run_config_from_json(j);
}

}  // namespace focuslime
