#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <json.hpp>

#include "focuslime/error.hpp"

namespace focuslime {

inline std::string escape_html(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

namespace detail {

// Diverging scale: positive scores shade red, negative blue, zero neutral.
inline std::string score_style(double score, double max_abs) {
  if (max_abs <= 0.0 || score == 0.0) return "background:#ffffff";
  const double intensity = std::min(1.0, std::abs(score) / max_abs);
  const int fade = static_cast<int>(255 - 155 * intensity);
  char buffer[48];
  if (score > 0) {
    std::snprintf(buffer, sizeof(buffer), "background:rgb(255,%d,%d)", fade, fade);
  } else {
    std::snprintf(buffer, sizeof(buffer), "background:rgb(%d,%d,255)", fade, fade);
  }
  return buffer;
}

}  // namespace detail

// Self-contained heatmap page for one explanation JSON (the cmd_explain
// output schema). Frozen units are visually distinct from active-but-low
// ones; all document text is HTML-escaped.
inline std::string render_explanation_html(const nlohmann::json& explanation) {
  require(explanation.contains("id") && explanation.contains("scores") &&
              explanation.contains("units") && explanation.contains("focus_mask"),
          ErrorCode::ConfigError, "explanation JSON missing required fields");

  const auto& scores = explanation.at("scores");
  const auto& units = explanation.at("units");
  const auto& focus = explanation.at("focus_mask");
  require(scores.size() == units.size() && focus.size() == units.size(),
          ErrorCode::ConfigError, "explanation JSON has inconsistent lengths");

  double max_abs = 0.0;
  for (const auto& s : scores) max_abs = std::max(max_abs, std::abs(s.get<double>()));

  std::string html;
  html += "<!DOCTYPE html><html><head><meta charset=\"utf-8\">";
  html += "<title>" + escape_html(explanation.at("id").get<std::string>()) + "</title>";
  html += "<style>"
          "body{font-family:Georgia,serif;margin:2em;max-width:70em;}"
          ".word{padding:1px 2px;border-radius:2px;}"
          ".frozen{color:#888;border-bottom:1px dashed #bbb;}"
          ".legend span{margin-right:1.5em;}"
          "table{border-collapse:collapse;margin-top:1em;}"
          "td,th{border:1px solid #ccc;padding:2px 8px;font-size:0.85em;}"
          "</style></head><body>";
  html += "<h2>Explanation: " + escape_html(explanation.at("id").get<std::string>()) + "</h2>";
  html += "<p class=\"legend\">"
          "<span class=\"word\" style=\"background:rgb(255,120,120)\">positive</span>"
          "<span class=\"word\" style=\"background:rgb(120,120,255)\">negative</span>"
          "<span class=\"word frozen\">frozen (outside focus)</span></p><p>";
  for (std::size_t i = 0; i < units.size(); ++i) {
    const double score = scores[i].get<double>();
    const bool frozen = focus[i].get<int>() == 0;
    html += "<span class=\"word";
    if (frozen) html += " frozen";
    html += "\" style=\"" + detail::score_style(score, max_abs) + "\" title=\"";
    html += std::to_string(score) + "\">";
    html += escape_html(units[i].at("surface").get<std::string>());
    html += "</span> ";
  }
  html += "</p>";

  if (explanation.contains("diagnostics")) {
    const auto& diag = explanation.at("diagnostics");
    html += "<h3>Diagnostics</h3><table>";
    for (const auto& [key, value] : diag.items()) {
      if (key == "scout") continue;
      html += "<tr><th>" + escape_html(key) + "</th><td>" +
              escape_html(value.dump()) + "</td></tr>";
    }
    html += "</table>";
    if (diag.contains("scout") && diag.at("scout").contains("iterations")) {
      html += "<h3>Scout trace</h3><table><tr><th>iteration</th><th>level</th>"
              "<th>units</th><th>kept</th><th>word coverage</th></tr>";
      std::size_t t = 0;
      for (const auto& iteration : diag.at("scout").at("iterations")) {
        html += "<tr><td>" + std::to_string(++t) + "</td><td>" +
                escape_html(iteration.at("level").get<std::string>()) + "</td><td>" +
                std::to_string(iteration.at("unit_count").get<std::size_t>()) + "</td><td>" +
                std::to_string(iteration.at("survivors").size()) + "</td><td>" +
                std::to_string(iteration.at("word_coverage").get<std::size_t>()) +
                "</td></tr>";
      }
      html += "</table>";
    }
  }
  html += "</body></html>";
  return html;
}

inline std::string render_error_html(const std::string& name, const std::string& message) {
  return "<!DOCTYPE html><html><head><meta charset=\"utf-8\"><title>error</title></head>"
         "<body><h2>Malformed explanation: " + escape_html(name) + "</h2><pre>" +
         escape_html(message) + "</pre></body></html>";
}

}  // namespace focuslime
