#pragma once

#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "focuslime/error.hpp"

namespace focuslime {

// One whitespace-delimited word with byte offsets into the document text.
struct WordUnit {
  std::size_t index = 0;
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  std::string surface;

  bool operator==(const WordUnit&) const = default;
};

struct EvidenceSpan {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive

  bool operator==(const EvidenceSpan&) const = default;
};

struct DocumentMeta {
  std::string question;
  std::string answer_label;  // "yes" or "no"
  std::vector<EvidenceSpan> evidence;
};

inline bool is_space_byte(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

// Maximal non-whitespace runs, punctuation kept attached.
inline std::vector<WordUnit> tokenize(std::string_view text) {
  std::vector<WordUnit> units;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space_byte(text[i])) ++i;
    if (i >= text.size()) break;
    std::size_t start = i;
    while (i < text.size() && !is_space_byte(text[i])) ++i;
    WordUnit unit;
    unit.index = units.size();
    unit.start = start;
    unit.end = i;
    unit.surface = std::string(text.substr(start, i - start));
    units.push_back(std::move(unit));
  }
  return units;
}

struct Document {
  std::string id;
  std::string text;
  std::vector<WordUnit> units;
  DocumentMeta meta;

  std::size_t size() const { return units.size(); }

  static Document make(std::string id, std::string text, DocumentMeta meta = {}) {
    Document doc;
    doc.id = std::move(id);
    doc.text = std::move(text);
    doc.units = tokenize(doc.text);
    doc.meta = std::move(meta);
    return doc;
  }
};

// A blank line (two or more newlines in the inter-unit gap) separates paragraphs.
inline bool paragraph_break_after(const Document& doc, std::size_t i) {
  if (i + 1 >= doc.units.size()) return false;
  std::size_t gap_begin = doc.units[i].end;
  std::size_t gap_end = doc.units[i + 1].start;
  int newlines = 0;
  for (std::size_t p = gap_begin; p < gap_end; ++p) {
    if (doc.text[p] == '\n' && ++newlines >= 2) return true;
  }
  return false;
}

enum class Level { Document = 0, Paragraph = 1, Sentence = 2, Word = 3 };

inline const char* to_string(Level level) {
  switch (level) {
    case Level::Document: return "document";
    case Level::Paragraph: return "paragraph";
    case Level::Sentence: return "sentence";
    case Level::Word: return "word";
  }
  return "unknown";
}

struct Segment {
  Level level = Level::Document;
  std::size_t first = 0;  // inclusive unit index
  std::size_t last = 0;   // inclusive unit index
  std::vector<Segment> children;

  std::size_t width() const { return last - first + 1; }
};

inline bool sentence_terminator(const WordUnit& unit) {
  if (unit.surface.empty()) return false;
  char c = unit.surface.back();
  return c == '.' || c == '!' || c == '?' || c == ':';
}

// Splits parent into segments one level down. PARAGRAPH boundaries sit at
// blank-line runs, SENTENCE boundaries after terminal punctuation or at
// paragraph end, WORD is the identity decomposition.
inline std::vector<Segment> decompose(const Document& doc, const Segment& parent,
                                      Level target) {
  require(static_cast<int>(target) == static_cast<int>(parent.level) + 1,
          ErrorCode::ContractViolation,
          std::string("decompose: target level ") + to_string(target) +
              " is not one below " + to_string(parent.level));
  require(parent.last < doc.units.size() && parent.first <= parent.last,
          ErrorCode::ContractViolation, "decompose: parent span out of bounds");

  std::vector<Segment> out;
  std::size_t begin = parent.first;
  for (std::size_t i = parent.first; i <= parent.last; ++i) {
    bool boundary = false;
    if (i == parent.last) {
      boundary = true;
    } else if (target == Level::Word) {
      boundary = true;
    } else if (target == Level::Paragraph) {
      boundary = paragraph_break_after(doc, i);
    } else {  // Sentence
      boundary = sentence_terminator(doc.units[i]) || paragraph_break_after(doc, i);
    }
    if (boundary) {
      out.push_back(Segment{target, begin, i, {}});
      begin = i + 1;
    }
  }
  return out;
}

struct SegmentTree {
  Segment root;
};

namespace detail {
inline void decompose_recursive(const Document& doc, Segment& node, Level deepest) {
  if (node.level >= deepest) return;
  Level next = static_cast<Level>(static_cast<int>(node.level) + 1);
  node.children = decompose(doc, node, next);
  for (Segment& child : node.children) decompose_recursive(doc, child, deepest);
}
}  // namespace detail

inline SegmentTree build_tree(const Document& doc, Level deepest = Level::Word) {
  require(!doc.units.empty(), ErrorCode::ContractViolation,
          "build_tree: document has no units");
  SegmentTree tree;
  tree.root = Segment{Level::Document, 0, doc.units.size() - 1, {}};
  detail::decompose_recursive(doc, tree.root, deepest);
  return tree;
}

}  // namespace focuslime
