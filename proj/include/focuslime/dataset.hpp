#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "focuslime/error.hpp"
#include "focuslime/segment.hpp"

namespace focuslime {

// One JSONL record: {"id", "document", "question", "answer", "evidence": [...]}.
struct DatasetRecord {
  std::string id;
  std::string document;
  std::string question;
  std::string answer;  // "yes" | "no"
  std::vector<EvidenceSpan> evidence;

  void validate() const {
    require(!id.empty(), ErrorCode::ConfigError, "dataset record has empty id");
    require(answer == "yes" || answer == "no", ErrorCode::ConfigError,
            "record '" + id + "': answer must be yes or no");
    for (const EvidenceSpan& span : evidence) {
      require(span.start < span.end && span.end <= document.size(),
              ErrorCode::ConfigError,
              "record '" + id + "': evidence span out of document bounds");
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json spans = nlohmann::json::array();
    for (const EvidenceSpan& span : evidence) {
      spans.push_back({{"start", span.start}, {"end", span.end}});
    }
    return {{"id", id},
            {"document", document},
            {"question", question},
            {"answer", answer},
            {"evidence", spans}};
  }

  static DatasetRecord from_json(const nlohmann::json& j) {
    DatasetRecord record;
    require(j.is_object(), ErrorCode::ConfigError, "dataset record is not an object");
    record.id = j.at("id").get<std::string>();
    record.document = j.at("document").get<std::string>();
    record.question = j.at("question").get<std::string>();
    record.answer = j.at("answer").get<std::string>();
    if (j.contains("evidence")) {
      for (const auto& span : j.at("evidence")) {
        record.evidence.push_back(EvidenceSpan{span.at("start").get<std::size_t>(),
                                               span.at("end").get<std::size_t>()});
      }
    }
    record.validate();
    return record;
  }

  Document to_document() const {
    DocumentMeta meta;
    meta.question = question;
    meta.answer_label = answer;
    meta.evidence = evidence;
    return Document::make(id, document, std::move(meta));
  }
};

inline std::vector<DatasetRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot open dataset file '" + path + "'");
  std::vector<DatasetRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    require(!j.is_discarded(), ErrorCode::ConfigError,
            path + ":" + std::to_string(line_no) + ": invalid JSON");
    records.push_back(DatasetRecord::from_json(j));
  }
  return records;
}

inline void write_jsonl(const std::string& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoError, "cannot write dataset file '" + path + "'");
  for (const DatasetRecord& record : records) out << record.to_json().dump() << "\n";
}

}  // namespace focuslime
