#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace duohand {

/// Right-hand gesture vocabulary. The numeric values are the classifier's
/// output indices and must not be reordered.
enum class GestureClass : std::uint8_t {
  idle = 0,
  up_down = 1,
  to_fro = 2,
  left_right = 3,
  rectangle = 4,
  rectangle_flat = 5,
  circle = 6,
};

inline constexpr std::size_t kNumGestures = 7;

inline constexpr std::array<GestureClass, kNumGestures> kAllGestures = {
    GestureClass::idle,      GestureClass::up_down,        GestureClass::to_fro,
    GestureClass::left_right, GestureClass::rectangle,     GestureClass::rectangle_flat,
    GestureClass::circle,
};

inline constexpr std::array<std::string_view, kNumGestures> kGestureNames = {
    "idle", "up-down", "to-fro", "left-right", "rectangle", "rectangle-flat", "circle",
};

constexpr std::size_t index_of(GestureClass g) { return static_cast<std::size_t>(g); }

constexpr std::string_view to_string(GestureClass g) { return kGestureNames[index_of(g)]; }

inline std::optional<GestureClass> gesture_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kNumGestures; ++i) {
    if (kGestureNames[i] == name) return static_cast<GestureClass>(i);
  }
  return std::nullopt;
}

inline GestureClass gesture_from_index(std::size_t i) {
  if (i >= kNumGestures) throw std::out_of_range("gesture index " + std::to_string(i));
  return static_cast<GestureClass>(i);
}

}  // namespace duohand
