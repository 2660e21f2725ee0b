#pragma once

#include <optional>
#include <string>

#include "sl/common.hpp"

namespace sl {

/// The three expression classes. Fixed index order: confusion-matrix rows and
/// model logits use Laugh=0, Smile=1, None=2 everywhere.
enum class Expression : int { Laugh = 0, Smile = 1, None = 2 };

/// Annotated strength. Laughs use {Low, Medium, High}; smiles add Subtle.
enum class Intensity : int { Subtle = 0, Low = 1, Medium = 2, High = 3 };

constexpr int kNumClasses = 3;

inline const char* to_string(Expression e) {
  switch (e) {
    case Expression::Laugh: return "laugh";
    case Expression::Smile: return "smile";
    case Expression::None: return "none";
  }
  return "?";
}

inline const char* to_string(Intensity i) {
  switch (i) {
    case Intensity::Subtle: return "subtle";
    case Intensity::Low: return "low";
    case Intensity::Medium: return "medium";
    case Intensity::High: return "high";
  }
  return "?";
}

inline std::string intensity_to_string(const std::optional<Intensity>& i) {
  return i ? to_string(*i) : "";
}

inline Expression expression_from_token(const std::string& tok) {
  if (tok == "laugh") return Expression::Laugh;
  if (tok == "smile") return Expression::Smile;
  if (tok == "none") return Expression::None;
  fail("UnknownLabel", "unknown label token '" + tok + "'");
}

inline std::optional<Intensity> intensity_from_token(const std::string& tok) {
  if (tok.empty()) return std::nullopt;
  if (tok == "subtle") return Intensity::Subtle;
  if (tok == "low") return Intensity::Low;
  if (tok == "medium") return Intensity::Medium;
  if (tok == "high") return Intensity::High;
  fail("UnknownLabel", "unknown intensity token '" + tok + "'");
}

/// intensity present iff expression != None; Laugh never Subtle.
inline void check_intensity_legal(Expression e, const std::optional<Intensity>& i,
                                  const std::string& where) {
  if (e == Expression::None) {
    if (i) fail("IllegalIntensity", where + ": none segments carry no intensity");
    return;
  }
  if (!i) fail("IllegalIntensity", where + ": " + to_string(e) + " requires an intensity");
  if (e == Expression::Laugh && *i == Intensity::Subtle)
    fail("IllegalIntensity", where + ": laugh intensity cannot be subtle");
}

}  // namespace sl
