#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "focuslime/config.hpp"
#include "focuslime/dataset.hpp"
#include "focuslime/error.hpp"
#include "focuslime/model.hpp"

namespace focuslime {

// Generator spec for a desk-scale benchmark: filler documents with a planted
// trigger phrase at a declared position, plus the matching synthetic model.
struct SyntheticSuiteSpec {
  std::size_t documents = 20;
  std::size_t words_per_document = 2000;
  std::vector<std::string> trigger_words{"garnet", "vexwood", "illyria"};
  long placement_paragraph = -1;  // -1 = middle paragraph
  std::string kind = "keyword_and";
  double p_on = 0.95;
  double p_off = 0.05;
  std::uint64_t seed = 7;
  std::string question =
      "Does the document contain the designated clause? Answer yes or no.";

  nlohmann::json to_json() const {
    return {{"documents", documents},
            {"words_per_document", words_per_document},
            {"trigger_words", trigger_words},
            {"placement_paragraph", placement_paragraph},
            {"kind", kind},
            {"p_on", p_on},
            {"p_off", p_off},
            {"seed", seed},
            {"question", question}};
  }

  static SyntheticSuiteSpec from_json(const nlohmann::json& j) {
    detail::check_keys(j,
                       {"documents", "words_per_document", "trigger_words",
                        "placement_paragraph", "kind", "p_on", "p_off", "seed", "question"},
                       "synthetic suite spec");
    SyntheticSuiteSpec spec;
    detail::read_field(j, "documents", spec.documents);
    detail::read_field(j, "words_per_document", spec.words_per_document);
    detail::read_field(j, "trigger_words", spec.trigger_words);
    detail::read_field(j, "placement_paragraph", spec.placement_paragraph);
    detail::read_field(j, "kind", spec.kind);
    detail::read_field(j, "p_on", spec.p_on);
    detail::read_field(j, "p_off", spec.p_off);
    detail::read_field(j, "seed", spec.seed);
    detail::read_field(j, "question", spec.question);
    require(!spec.trigger_words.empty(), ErrorCode::ConfigError,
            "synthetic suite: trigger_words must be non-empty");
    require(spec.documents >= 1 && spec.words_per_document >= 64, ErrorCode::ConfigError,
            "synthetic suite: need >= 1 documents of >= 64 words");
    return spec;
  }
};

namespace detail {

inline const std::vector<std::string>& filler_vocabulary() {
  static const std::vector<std::string> vocab{
      "agreement", "party",    "shall",    "herein",    "provision", "section",
      "notice",    "term",     "period",   "payment",   "obligation", "right",
      "liability", "damages",  "warranty", "material",  "breach",     "effective",
      "date",      "written",  "consent",  "applicable", "reasonable", "business",
      "services",  "product",  "customer", "supplier",  "confidential", "information",
      "disclose",  "pursuant", "thereof",  "herewith",  "amendment",  "schedule",
      "exhibit",   "deliver",  "执行" /* non-ASCII filler for UTF-8 coverage */,
      "relating",  "subject",  "matter",   "entire",    "construed",  "remain",
      "force",     "effect",   "survive",  "termination"};
  return vocab;
}

}  // namespace detail

struct SyntheticSuite {
  std::vector<DatasetRecord> records;
  SyntheticModel model;
};

// Filler paragraphs of four 8-word sentences; the trigger words are emitted
// contiguously inside one sentence of the placement paragraph and the
// evidence span covers exactly those words.
inline SyntheticSuite generate_suite(const SyntheticSuiteSpec& spec) {
  const std::vector<std::string>& vocab = detail::filler_vocabulary();
  for (const std::string& trigger : spec.trigger_words) {
    for (const std::string& filler : vocab) {
      require(normalize_token(filler) != normalize_token(trigger), ErrorCode::ConfigError,
              "trigger word '" + trigger + "' collides with the filler vocabulary");
    }
  }

  SyntheticSuite suite;
  suite.model.kind = spec.kind == "clause" ? SyntheticModel::Kind::Clause
                                           : SyntheticModel::Kind::KeywordAnd;
  require(spec.kind == "keyword_and" || spec.kind == "clause", ErrorCode::ConfigError,
          "synthetic suite: kind must be keyword_and or clause");
  suite.model.keywords = spec.trigger_words;
  suite.model.p_on = spec.p_on;
  suite.model.p_off = spec.p_off;

  constexpr std::size_t kWordsPerSentence = 8;
  constexpr std::size_t kSentencesPerParagraph = 4;
  constexpr std::size_t kWordsPerParagraph = kWordsPerSentence * kSentencesPerParagraph;
  const std::size_t paragraphs =
      std::max<std::size_t>(1, (spec.words_per_document + kWordsPerParagraph - 1) /
                                   kWordsPerParagraph);
  const std::size_t trigger_paragraph =
      spec.placement_paragraph >= 0
          ? std::min<std::size_t>(static_cast<std::size_t>(spec.placement_paragraph),
                                  paragraphs - 1)
          : paragraphs / 2;

  for (std::size_t d = 0; d < spec.documents; ++d) {
    std::mt19937_64 rng(derive_seed(spec.seed, d));
    auto filler = [&] { return vocab[rng() % vocab.size()]; };

    std::string text;
    EvidenceSpan evidence{0, 0};
    for (std::size_t p = 0; p < paragraphs; ++p) {
      if (p > 0) text += "\n\n";
      for (std::size_t s = 0; s < kSentencesPerParagraph; ++s) {
        if (s > 0) text += " ";
        const bool trigger_sentence = (p == trigger_paragraph && s == 1);
        for (std::size_t w = 0; w < kWordsPerSentence; ++w) {
          if (w > 0) text += " ";
          if (trigger_sentence && w == 2) {
            evidence.start = text.size();
            for (std::size_t t = 0; t < spec.trigger_words.size(); ++t) {
              if (t > 0) text += " ";
              text += spec.trigger_words[t];
            }
            evidence.end = text.size();
            w += spec.trigger_words.size() - 1;
          } else {
            text += filler();
          }
        }
        text += ".";
      }
    }

    DatasetRecord record;
    record.id = "synthetic-" + std::to_string(d);
    record.document = std::move(text);
    record.question = spec.question;
    record.answer = "yes";
    record.evidence.push_back(evidence);
    record.validate();
    suite.records.push_back(std::move(record));
  }
  return suite;
}

}  // namespace focuslime
