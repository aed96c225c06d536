#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "focuslime/error.hpp"
#include "focuslime/segment.hpp"

namespace focuslime {

// Binary perturbation vector: 1 = keep, 0 = remove.
struct Mask {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }

  static Mask all_ones(std::size_t n) { return Mask{std::vector<std::uint8_t>(n, 1)}; }

  bool operator==(const Mask&) const = default;
};

// 1 = active (perturbable), 0 = frozen.
struct FocusMask {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }

  std::size_t n_active() const {
    std::size_t count = 0;
    for (auto b : bits) count += b;
    return count;
  }

  static FocusMask all_active(std::size_t n) {
    return FocusMask{std::vector<std::uint8_t>(n, 1)};
  }

  bool operator==(const FocusMask&) const = default;
};

// All sampling draws come from std::mt19937_64, whose output sequence is
// fully specified by the standard, seeded directly with the caller's seed.
// One Bernoulli(0.5) bit = the top bit of one 64-bit draw.
class BitSource {
 public:
  explicit BitSource(std::uint64_t seed) : engine_(seed) {}

  bool draw() { return (engine_() >> 63) != 0; }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; derives independent per-stage seeds from a run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Eq of the mask-conditioned generator: frozen bits stay 1, active bits are
// i.i.d. Bernoulli(0.5). Sample 0 is always the all-ones anchor.
inline std::vector<Mask> sample_constrained(const FocusMask& focus, std::size_t K,
                                            std::uint64_t seed) {
  require(K >= 1, ErrorCode::ContractViolation, "sample_constrained: K must be >= 1");
  require(focus.n_active() >= 1, ErrorCode::DegenerateFocus,
          "sample_constrained: focus mask has no active bits");
  const std::size_t n = focus.size();
  std::vector<Mask> masks;
  masks.reserve(K);
  masks.push_back(Mask::all_ones(n));
  BitSource bits(seed);
  for (std::size_t k = 1; k < K; ++k) {
    Mask mask = Mask::all_ones(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (focus.bits[i]) mask.bits[i] = bits.draw() ? 1 : 0;
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

// Original-LIME sampling; same law with every coordinate active.
inline std::vector<Mask> sample_unconstrained(std::size_t n, std::size_t K,
                                              std::uint64_t seed) {
  require(n >= 1, ErrorCode::ContractViolation, "sample_unconstrained: n must be >= 1");
  return sample_constrained(FocusMask::all_active(n), K, seed);
}

struct MaskRenderConfig {
  // When set, dropped units are replaced by this token instead of deleted.
  std::optional<std::string> replacement;
};

// Reconstruction phi(z, x): surviving units joined by single spaces,
// paragraph breaks preserved as blank lines.
inline std::string apply_mask(const Mask& mask, const Document& doc,
                              const MaskRenderConfig& render = {}) {
  require(mask.size() == doc.units.size(), ErrorCode::ContractViolation,
          "apply_mask: mask length does not match document unit count");
  std::string out;
  out.reserve(doc.text.size());
  bool any_emitted = false;
  bool pending_paragraph_break = false;
  for (std::size_t i = 0; i < doc.units.size(); ++i) {
    const bool keep = mask.bits[i] != 0;
    const std::string* piece = nullptr;
    if (keep) {
      piece = &doc.units[i].surface;
    } else if (render.replacement) {
      piece = &*render.replacement;
    }
    if (piece) {
      if (any_emitted) out += pending_paragraph_break ? "\n\n" : " ";
      out += *piece;
      any_emitted = true;
      pending_paragraph_break = false;
    }
    if (paragraph_break_after(doc, i)) pending_paragraph_break = true;
  }
  return out;
}

struct PerturbedSample {
  Mask mask;
  std::string text;
  std::optional<double> prediction;
  std::optional<double> weight;
};

}  // namespace focuslime
