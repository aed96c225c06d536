#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include <httplib.h>
#include <json.hpp>

// glibc's <resolv.h> (dragged in by the HTTP client) defines _res as a
// macro, which collides with Eigen parameter names.
#ifdef _res
#undef _res
#endif

#include "focuslime/error.hpp"
#include "focuslime/segment.hpp"

namespace focuslime {

enum class Role { Target, Proxy };
enum class Backend { HttpChat, Synthetic };

struct EndpointConfig {
  std::string base_url;            // e.g. "http://127.0.0.1:8080"
  std::string auth_env;            // env var holding the bearer token
  int timeout_s = 60;
  int max_parallel = 4;
  int max_retries = 3;
  int backoff_ms = 500;
};

struct AnswerLabels {
  std::string yes = "yes";
  std::string no = "no";
};

// Lowercase, strip leading/trailing non-alphanumeric bytes. Used both for
// answer-label matching and synthetic trigger lookups, so "Illinois." and
// " Yes" normalize as expected.
inline std::string normalize_token(std::string_view token) {
  std::size_t begin = 0, end = token.size();
  auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  while (begin < end && !alnum(token[begin])) ++begin;
  while (end > begin && !alnum(token[end - 1])) --end;
  std::string out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i)
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(token[i])));
  return out;
}

// Deterministic text -> probability oracles for desk-scale verification.
// Output depends only on presence/absence of the declared trigger words.
struct SyntheticModel {
  enum class Kind { KeywordAnd, WeightedLinear, Clause };

  Kind kind = Kind::KeywordAnd;
  // KeywordAnd / Clause: p_on when every trigger word is present.
  std::vector<std::string> keywords;
  double p_on = 0.95;
  double p_off = 0.05;
  // WeightedLinear: logistic link over per-word presence indicators.
  std::map<std::string, double> weights;
  double bias = 0.0;

  double evaluate(std::string_view text) const {
    std::unordered_set<std::string> present;
    for (const WordUnit& unit : tokenize(text)) {
      std::string norm = normalize_token(unit.surface);
      if (!norm.empty()) present.insert(std::move(norm));
    }
    switch (kind) {
      case Kind::KeywordAnd:
      case Kind::Clause: {
        for (const std::string& word : keywords) {
          if (!present.count(normalize_token(word))) return p_off;
        }
        return p_on;
      }
      case Kind::WeightedLinear: {
        double score = bias;
        for (const auto& [word, weight] : weights) {
          if (present.count(normalize_token(word))) score += weight;
        }
        return 1.0 / (1.0 + std::exp(-score));
      }
    }
    return p_off;
  }
};

struct ModelSpec {
  Role role = Role::Target;
  Backend backend = Backend::Synthetic;
  std::string model_id;
  EndpointConfig endpoint;
  AnswerLabels labels;
  std::shared_ptr<const SyntheticModel> synthetic;

  void validate() const {
    if (backend == Backend::HttpChat) {
      require(!endpoint.base_url.empty(), ErrorCode::ConfigError,
              "model '" + model_id + "': http_chat backend requires endpoint.base_url");
    } else {
      require(synthetic != nullptr, ErrorCode::ConfigError,
              "model '" + model_id + "': synthetic backend requires a registered definition");
    }
  }
};

struct Prediction {
  double probability = 0.0;
  std::string payload_hash;       // audit: digest of the raw backend payload
  bool from_cache = false;
  bool sampled_fallback = false;  // no logprobs; hard 0/1 from sampled answer
};

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

inline std::string cache_key(std::string_view model_id, std::string_view prompt) {
  std::string blob;
  blob.reserve(model_id.size() + prompt.size() + 1);
  blob.append(model_id);
  blob.push_back('\x1f');
  blob.append(prompt);
  return sha256_hex(blob);
}

// Token cost of a rendered prompt: whitespace-token count. Deterministic and
// provider-independent.
inline std::uint64_t cost(std::string_view text) {
  std::uint64_t tokens = 0;
  bool in_token = false;
  for (char c : text) {
    if (is_space_byte(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++tokens;
    }
  }
  return tokens;
}

inline std::string render_prompt(std::string_view document_text, std::string_view question) {
  if (document_text.empty()) return std::string(question);
  if (question.empty()) return std::string(document_text);
  std::string prompt;
  prompt.reserve(document_text.size() + question.size() + 2);
  prompt.append(document_text);
  prompt.append("\n\n");
  prompt.append(question);
  return prompt;
}

// Token ledger. `consumed` only counts successful cache-miss queries and is
// monotone; in-flight reservations are tracked separately so parallel batches
// cannot overshoot the limit.
class Budget {
 public:
  explicit Budget(std::uint64_t limit = 0, std::uint64_t unlimited_sample_cap = 1000)
      : limit_(limit), sample_cap_(unlimited_sample_cap) {}

  Budget(const Budget& other) {
    std::lock_guard lock(other.mutex_);
    limit_ = other.limit_;
    sample_cap_ = other.sample_cap_;
    consumed_ = other.consumed_;
    pending_ = other.pending_;
    per_model_ = other.per_model_;
  }
  Budget& operator=(const Budget&) = delete;

  bool unlimited() const { return limit_ == 0; }
  std::uint64_t limit() const { return limit_; }
  std::uint64_t sample_cap() const { return sample_cap_; }

  std::uint64_t consumed() const {
    std::lock_guard lock(mutex_);
    return consumed_;
  }

  std::uint64_t consumed_for(const std::string& model_id) const {
    std::lock_guard lock(mutex_);
    auto it = per_model_.find(model_id);
    return it == per_model_.end() ? 0 : it->second;
  }

  std::uint64_t remaining() const {
    std::lock_guard lock(mutex_);
    if (limit_ == 0) return UINT64_MAX;
    std::uint64_t used = consumed_ + pending_;
    return used >= limit_ ? 0 : limit_ - used;
  }

  bool try_reserve(std::uint64_t tokens) {
    std::lock_guard lock(mutex_);
    if (limit_ != 0 && consumed_ + pending_ + tokens > limit_) return false;
    pending_ += tokens;
    return true;
  }

  void commit(const std::string& model_id, std::uint64_t tokens) {
    std::lock_guard lock(mutex_);
    pending_ -= std::min(pending_, tokens);
    consumed_ += tokens;
    per_model_[model_id] += tokens;
  }

  void release(std::uint64_t tokens) {
    std::lock_guard lock(mutex_);
    pending_ -= std::min(pending_, tokens);
  }

 private:
  mutable std::mutex mutex_;
  std::uint64_t limit_ = 0;
  std::uint64_t sample_cap_ = 1000;
  std::uint64_t consumed_ = 0;
  std::uint64_t pending_ = 0;
  std::map<std::string, std::uint64_t> per_model_;
};

// K_max = floor(remaining budget / prompt cost); unlimited budgets use the
// configured sample cap.
inline std::uint64_t k_max(const Budget& budget, const ModelSpec&, std::uint64_t prompt_cost) {
  require(prompt_cost > 0, ErrorCode::ContractViolation, "k_max: prompt_cost must be > 0");
  if (budget.unlimited()) return budget.sample_cap();
  return budget.remaining() / prompt_cost;
}

// Append-only JSON-lines cache of {"key", "p", "ts"}; loaded into memory at
// startup, last-write-wins on duplicate keys. Hits never consume budget.
class QueryCache {
 public:
  QueryCache() = default;

  explicit QueryCache(std::string path) : path_(std::move(path)) {
    if (path_.empty()) return;
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
      if (record.is_discarded() || !record.contains("key") || !record.contains("p")) continue;
      entries_[record["key"].get<std::string>()] = record["p"].get<double>();
    }
  }

  std::optional<double> lookup(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void store(const std::string& key, double probability) {
    std::lock_guard lock(mutex_);
    entries_[key] = probability;
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    nlohmann::json record = {
        {"key", key},
        {"p", probability},
        {"ts", std::chrono::duration_cast<std::chrono::seconds>(
                   std::chrono::system_clock::now().time_since_epoch())
                   .count()}};
    out << record.dump() << "\n";
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::string path_;
  std::unordered_map<std::string, double> entries_;
};

struct BatchItemError {
  std::size_t index = 0;
  ErrorCode code = ErrorCode::NetworkError;
  std::string message;
};

struct BatchResult {
  // In input order; covers the prefix of items before the first error.
  std::vector<Prediction> predictions;
  std::vector<BatchItemError> errors;

  bool complete() const { return errors.empty(); }
  const BatchItemError& first_error() const { return errors.front(); }
};

class ModelClient {
 public:
  explicit ModelClient(ModelSpec spec, std::shared_ptr<QueryCache> cache = nullptr)
      : spec_(std::move(spec)),
        cache_(cache ? std::move(cache) : std::make_shared<QueryCache>()) {
    spec_.validate();
  }

  const ModelSpec& spec() const { return spec_; }

  Prediction query(const std::string& text, Budget& budget) const {
    require(!text.empty(), ErrorCode::ContractViolation, "query: text is empty");
    const std::string key = cache_key(spec_.model_id, text);
    if (auto hit = cache_->lookup(key)) {
      Prediction cached;
      cached.probability = *hit;
      cached.from_cache = true;
      return cached;
    }
    const std::uint64_t tokens = cost(text);
    if (!budget.try_reserve(tokens)) {
      fail(ErrorCode::BudgetExhausted,
           "query: " + std::to_string(tokens) + " tokens needed, " +
               std::to_string(budget.remaining()) + " remaining");
    }
    Prediction prediction;
    try {
      prediction = backend_query(text);
    } catch (...) {
      budget.release(tokens);
      throw;
    }
    budget.commit(spec_.model_id, tokens);
    cache_->store(key, prediction.probability);
    return prediction;
  }

  // Results are returned in input order regardless of completion order.
  // Budget is reserved sequentially in input order before dispatch, so the
  // outcome is independent of the parallelism level; issuing stops at the
  // first item the budget cannot cover.
  BatchResult batch_query(const std::vector<std::string>& texts, Budget& budget,
                          int parallelism = 1) const {
    BatchResult result;
    const std::size_t count = texts.size();
    std::vector<std::optional<Prediction>> items(count);
    std::vector<std::optional<BatchItemError>> item_errors(count);
    std::vector<std::size_t> misses;  // indices needing a backend call
    std::vector<std::uint64_t> miss_cost;

    std::size_t issued = count;
    for (std::size_t i = 0; i < count; ++i) {
      require(!texts[i].empty(), ErrorCode::ContractViolation, "batch_query: empty text");
      const std::string key = cache_key(spec_.model_id, texts[i]);
      if (auto hit = cache_->lookup(key)) {
        Prediction cached;
        cached.probability = *hit;
        cached.from_cache = true;
        items[i] = cached;
        continue;
      }
      const std::uint64_t tokens = cost(texts[i]);
      if (!budget.try_reserve(tokens)) {
        item_errors[i] = BatchItemError{i, ErrorCode::BudgetExhausted,
                                        "budget exhausted at batch index " + std::to_string(i)};
        issued = i;
        break;
      }
      misses.push_back(i);
      miss_cost.push_back(tokens);
    }

    auto run_one = [&](std::size_t slot) {
      const std::size_t i = misses[slot];
      try {
        Prediction prediction = backend_query(texts[i]);
        budget.commit(spec_.model_id, miss_cost[slot]);
        cache_->store(cache_key(spec_.model_id, texts[i]), prediction.probability);
        items[i] = std::move(prediction);
      } catch (const Error& e) {
        budget.release(miss_cost[slot]);
        item_errors[i] = BatchItemError{i, e.code(), e.what()};
      } catch (const std::exception& e) {
        budget.release(miss_cost[slot]);
        item_errors[i] = BatchItemError{i, ErrorCode::NetworkError, e.what()};
      }
    };

    const int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(misses.size())));
    if (workers <= 1) {
      for (std::size_t slot = 0; slot < misses.size(); ++slot) run_one(slot);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      pool.reserve(workers);
      for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t slot = next.fetch_add(1); slot < misses.size();
               slot = next.fetch_add(1)) {
            run_one(slot);
          }
        });
      }
      for (auto& t : pool) t.join();
    }

    for (std::size_t i = 0; i < issued; ++i) {
      if (item_errors[i]) break;
      result.predictions.push_back(*items[i]);
    }
    for (std::size_t i = 0; i < count; ++i) {
      if (item_errors[i]) result.errors.push_back(*item_errors[i]);
    }
    return result;
  }

 private:
  Prediction backend_query(const std::string& text) const {
    if (spec_.backend == Backend::Synthetic) {
      Prediction prediction;
      prediction.probability = spec_.synthetic->evaluate(text);
      prediction.payload_hash = sha256_hex(text);
      return prediction;
    }
    return http_query(text);
  }

  Prediction http_query(const std::string& text) const {
    nlohmann::json body = {
        {"model", spec_.model_id},
        {"messages", nlohmann::json::array({nlohmann::json{{"role", "user"}, {"content", text}}})},
        {"logprobs", true},
        {"top_logprobs", 20},
        {"max_tokens", 1},
        {"temperature", 0},
    };
    const std::string payload = body.dump();

    std::string last_error = "no attempt made";
    const int attempts = 1 + std::max(0, spec_.endpoint.max_retries);
    for (int attempt = 0; attempt < attempts; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(spec_.endpoint.backoff_ms << (attempt - 1)));
      }
      httplib::Client client(spec_.endpoint.base_url);
      client.set_connection_timeout(spec_.endpoint.timeout_s, 0);
      client.set_read_timeout(spec_.endpoint.timeout_s, 0);
      httplib::Headers headers;
      if (!spec_.endpoint.auth_env.empty()) {
        if (const char* token = std::getenv(spec_.endpoint.auth_env.c_str())) {
          headers.emplace("Authorization", std::string("Bearer ") + token);
        }
      }
      auto response = client.Post("/v1/chat/completions", headers, payload, "application/json");
      if (!response) {
        last_error = "transport failure: " + httplib::to_string(response.error());
        continue;
      }
      if (response->status == 429 || response->status >= 500) {
        last_error = "HTTP status " + std::to_string(response->status);
        continue;
      }
      if (response->status != 200) {
        fail(ErrorCode::NetworkError,
             "HTTP status " + std::to_string(response->status) + ": " + response->body);
      }
      return parse_chat_response(response->body);
    }
    fail(ErrorCode::NetworkError, "retries exhausted: " + last_error);
  }

  Prediction parse_chat_response(const std::string& body) const {
    nlohmann::json payload = nlohmann::json::parse(body, nullptr, false);
    require(!payload.is_discarded(), ErrorCode::UnparseableResponse, "response is not JSON");
    require(payload.contains("choices") && payload["choices"].is_array() &&
                !payload["choices"].empty(),
            ErrorCode::UnparseableResponse, "response has no choices");
    const nlohmann::json& choice = payload["choices"][0];

    Prediction prediction;
    prediction.payload_hash = sha256_hex(body);
    const std::string yes = normalize_token(spec_.labels.yes);
    const std::string no = normalize_token(spec_.labels.no);

    // Preferred path: sum probability mass of the first answer token over
    // case/whitespace variants of the yes label.
    if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
        choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array() &&
        !choice["logprobs"]["content"].empty()) {
      const nlohmann::json& first = choice["logprobs"]["content"][0];
      double mass = 0.0;
      bool recognized = false;
      auto accumulate = [&](const nlohmann::json& entry) {
        if (!entry.contains("token") || !entry.contains("logprob")) return;
        const std::string token = normalize_token(entry["token"].get<std::string>());
        if (token == yes) {
          mass += std::exp(entry["logprob"].get<double>());
          recognized = true;
        } else if (token == no) {
          recognized = true;
        }
      };
      if (first.contains("top_logprobs") && first["top_logprobs"].is_array()) {
        for (const auto& entry : first["top_logprobs"]) accumulate(entry);
      } else {
        accumulate(first);
      }
      require(recognized, ErrorCode::UnparseableResponse,
              "no recognizable answer token in logprobs");
      prediction.probability = std::min(1.0, mass);
      return prediction;
    }

    // Fallback: map the greedy answer string to {1.0, 0.0}, flagged for audit.
    if (choice.contains("message") && choice["message"].contains("content")) {
      const std::string answer =
          normalize_token(choice["message"]["content"].get<std::string>());
      prediction.sampled_fallback = true;
      if (answer.rfind(yes, 0) == 0) {
        prediction.probability = 1.0;
        return prediction;
      }
      if (answer.rfind(no, 0) == 0) {
        prediction.probability = 0.0;
        return prediction;
      }
      fail(ErrorCode::UnparseableResponse, "answer string '" + answer + "' matches no label");
    }
    fail(ErrorCode::UnparseableResponse, "response carries neither logprobs nor content");
  }

  ModelSpec spec_;
  std::shared_ptr<QueryCache> cache_;
};

}  // namespace focuslime
