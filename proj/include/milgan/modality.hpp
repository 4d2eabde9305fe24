#pragma once

#include <array>
#include <string>

#include "milgan/error.hpp"

namespace milgan {

/// The three aligned channels of a storyline: text embeddings, projected
/// image vectors, and their difference.
enum class Modality : int { txt = 0, img = 1, mm = 2 };

inline constexpr std::array<Modality, 3> kModalities{Modality::txt, Modality::img, Modality::mm};

inline const char* to_string(Modality m) {
  switch (m) {
    case Modality::txt: return "txt";
    case Modality::img: return "img";
    case Modality::mm: return "mm";
  }
  return "?";
}

inline Modality modality_from_string(const std::string& s) {
  if (s == "txt") return Modality::txt;
  if (s == "img") return Modality::img;
  if (s == "mm") return Modality::mm;
  throw DataError("unknown modality '" + s + "' (expected txt|img|mm)");
}

inline int index(Modality m) { return static_cast<int>(m); }

/// Per-modality mixing weights (the lambda vector).
using ModalWeights = std::array<double, 3>;

}  // namespace milgan
