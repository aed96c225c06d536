#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <catch_amalgamated.hpp>
#include <focuslime/model.hpp>

#include "support/helpers.hpp"

using namespace focuslime;

TEST_CASE("normalize_token lowercases and strips edge punctuation") {
  CHECK(normalize_token("Illinois.") == "illinois");
  CHECK(normalize_token("  Yes") == "yes");
  CHECK(normalize_token("(garnet),") == "garnet");
  CHECK(normalize_token("...") == "");
  CHECK(normalize_token("mid-dash") == "mid-dash");
}

TEST_CASE("keyword_and model depends only on trigger presence") {
  const ModelSpec spec = testutil::keyword_and_spec({"governing", "illinois"});
  const SyntheticModel& model = *spec.synthetic;
  CHECK(model.evaluate("This Agreement is Governed by Illinois. law") == 0.95);
  CHECK(model.evaluate("This Agreement is Governed by law") == 0.05);
  // Permuting non-trigger words never changes the prediction.
  CHECK(model.evaluate("law by Governed is Agreement This Illinois.") == 0.95);
  CHECK(model.evaluate("") == 0.05);
}

TEST_CASE("weighted_linear model applies a logistic link over presence") {
  const ModelSpec spec = testutil::weighted_linear_spec({{"alpha", 2.0}, {"beta", -1.0}}, 0.5);
  const SyntheticModel& model = *spec.synthetic;
  auto logistic = [](double s) { return 1.0 / (1.0 + std::exp(-s)); };
  CHECK(model.evaluate("alpha beta") == Catch::Approx(logistic(1.5)).epsilon(1e-15));
  CHECK(model.evaluate("alpha") == Catch::Approx(logistic(2.5)).epsilon(1e-15));
  CHECK(model.evaluate("nothing here") == Catch::Approx(logistic(0.5)).epsilon(1e-15));
  // Duplicates count once: presence, not frequency.
  CHECK(model.evaluate("alpha alpha alpha") == model.evaluate("alpha"));
}

TEST_CASE("cost counts whitespace tokens") {
  std::string prompt;
  for (int i = 0; i < 400; ++i) prompt += (i ? " w" : "w");
  CHECK(cost(prompt) == 400);
  CHECK(cost("one two\tthree\n\nfour") == 4);
  CHECK(cost("") == 0);
  // Empty document: the rendered prompt is just the question template.
  const std::string question =
      "does this apply to the supplier under the current terms or not";
  CHECK(render_prompt("", question) == question);
  CHECK(cost(render_prompt("", question)) == 12);
}

TEST_CASE("k_max arithmetic") {
  const ModelSpec spec = testutil::keyword_and_spec({"x"});
  CHECK(k_max(Budget(10000), spec, 400) == 25);
  CHECK(k_max(Budget(399), spec, 400) == 0);

  Budget budget(10000);
  REQUIRE(budget.try_reserve(4000));
  budget.commit(spec.model_id, 4000);
  CHECK(k_max(budget, spec, 400) == 15);

  Budget unlimited(0, 1000);
  CHECK(k_max(unlimited, spec, 400) == 1000);
}

TEST_CASE("budget reservations respect the limit and stay monotone") {
  Budget budget(10);
  CHECK(budget.remaining() == 10);
  CHECK(budget.try_reserve(6));
  CHECK(budget.remaining() == 4);
  CHECK_FALSE(budget.try_reserve(5));
  budget.commit("m", 6);
  CHECK(budget.consumed() == 6);
  CHECK(budget.consumed_for("m") == 6);
  CHECK(budget.try_reserve(4));
  budget.release(4);  // failed query returns the reservation, not the ledger
  CHECK(budget.consumed() == 6);
  CHECK(budget.remaining() == 4);
}

TEST_CASE("repeated identical query hits the cache with zero budget delta") {
  const ModelClient client(testutil::keyword_and_spec({"garnet"}));
  Budget budget(100);
  const Prediction first = client.query("garnet filler words", budget);
  CHECK(first.probability == 0.95);
  CHECK_FALSE(first.from_cache);
  CHECK(budget.consumed() == 3);
  const Prediction second = client.query("garnet filler words", budget);
  CHECK(second.from_cache);
  CHECK(second.probability == first.probability);
  CHECK(budget.consumed() == 3);
}

TEST_CASE("query fails with BUDGET_EXHAUSTED when the ledger cannot cover it") {
  const ModelClient client(testutil::keyword_and_spec({"garnet"}));
  Budget budget(2);
  try {
    client.query("one two three", budget);
    FAIL("expected budget exhaustion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BudgetExhausted);
  }
  CHECK(budget.consumed() == 0);
  CHECK(budget.remaining() == 2);
}

TEST_CASE("ledger equals the sum of costs of cache-miss queries") {
  const ModelClient client(testutil::keyword_and_spec({"garnet"}));
  Budget budget(1000);
  std::uint64_t expected = 0;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 30; ++i) {
    std::string text = "q" + std::to_string(rng() % 10);
    for (int w = 0; w < static_cast<int>(rng() % 4); ++w) text += " pad" + std::to_string(w);
    const bool miss = !client.query(text, budget).from_cache;
    if (miss) expected += cost(text);
    CHECK(budget.consumed() == expected);
  }
}

TEST_CASE("cache persists bit-identical probabilities across restarts") {
  testutil::TempDir tmp;
  const std::string path = tmp.file("cache.jsonl");
  const ModelSpec spec =
      testutil::weighted_linear_spec({{"alpha", 0.3}, {"beta", -1.7}}, 0.123);
  double first_value = 0.0;
  {
    const ModelClient client(spec, std::make_shared<QueryCache>(path));
    Budget budget(0);
    first_value = client.query("alpha beta gamma", budget).probability;
  }
  {
    const ModelClient client(spec, std::make_shared<QueryCache>(path));
    Budget budget(0);
    const Prediction replay = client.query("alpha beta gamma", budget);
    CHECK(replay.from_cache);
    CHECK(replay.probability == first_value);  // bit-identical
    CHECK(budget.consumed() == 0);
  }
}

TEST_CASE("cache is last-write-wins on duplicate keys") {
  testutil::TempDir tmp;
  const std::string path = tmp.file("cache.jsonl");
  {
    QueryCache cache(path);
    cache.store("k", 0.25);
    cache.store("k", 0.75);
    CHECK(cache.size() == 1);
  }
  QueryCache reloaded(path);
  REQUIRE(reloaded.lookup("k").has_value());
  CHECK(*reloaded.lookup("k") == 0.75);
}

TEST_CASE("batch_query returns in-order results under parallelism") {
  const ModelClient client(testutil::keyword_and_spec({"garnet"}));
  std::vector<std::string> texts;
  for (int i = 0; i < 16; ++i) {
    texts.push_back((i % 2 ? "garnet item " : "plain item ") + std::to_string(i));
  }
  Budget budget(0);
  const BatchResult result = client.batch_query(texts, budget, 4);
  REQUIRE(result.complete());
  REQUIRE(result.predictions.size() == 16);
  for (int i = 0; i < 16; ++i) {
    CHECK(result.predictions[i].probability == (i % 2 ? 0.95 : 0.05));
  }
}

TEST_CASE("batch_query stops issuing at the first unaffordable item") {
  const ModelClient client(testutil::keyword_and_spec({"garnet"}));
  std::vector<std::string> texts;
  for (int i = 0; i < 10; ++i) texts.push_back("garnet w" + std::to_string(i));  // cost 2
  Budget budget(10);  // affords exactly 5 items
  const BatchResult result = client.batch_query(texts, budget, 3);
  REQUIRE_FALSE(result.complete());
  CHECK(result.predictions.size() == 5);
  CHECK(result.first_error().index == 5);
  CHECK(result.first_error().code == ErrorCode::BudgetExhausted);
  CHECK(budget.consumed() == 10);
}

TEST_CASE("batch_query results are independent of the parallelism level") {
  const ModelSpec spec =
      testutil::weighted_linear_spec({{"alpha", 1.1}, {"beta", -0.4}, {"gamma", 0.2}});
  std::vector<std::string> texts;
  std::mt19937_64 rng(17);
  const std::vector<std::string> words = {"alpha", "beta", "gamma", "delta"};
  for (int i = 0; i < 24; ++i) {
    std::string text = "case" + std::to_string(i);
    for (int w = 0; w < 3; ++w) text += " " + words[rng() % words.size()];
    texts.push_back(text);
  }
  Budget sequential_budget(70);
  const ModelClient sequential(spec);
  const BatchResult expected = sequential.batch_query(texts, sequential_budget, 1);

  Budget parallel_budget(70);
  const ModelClient parallel(spec);
  const BatchResult actual = parallel.batch_query(texts, parallel_budget, 8);

  REQUIRE(actual.predictions.size() == expected.predictions.size());
  for (std::size_t i = 0; i < expected.predictions.size(); ++i) {
    CHECK(actual.predictions[i].probability == expected.predictions[i].probability);
  }
  CHECK(actual.errors.size() == expected.errors.size());
  CHECK(sequential_budget.consumed() == parallel_budget.consumed());
}

TEST_CASE("cache keys are 256-bit hex digests separating model and prompt") {
  const std::string key = cache_key("model-a", "prompt");
  CHECK(key.size() == 64);
  CHECK(key != cache_key("model-b", "prompt"));
  CHECK(key != cache_key("model-a", "other prompt"));
  // The separator prevents ambiguous concatenations.
  CHECK(cache_key("ab", "c") != cache_key("a", "bc"));
}
