#pragma once

#include <string>

namespace dancegen {

/// Dance style classes, shared by the audio classifier, the conditional
/// generator, and the evaluation protocols.
enum class StyleLabel : int { Ballet = 0, MJ = 1, Salsa = 2 };

inline constexpr int kNumStyles = 3;

const char* style_name(StyleLabel s);
StyleLabel style_from_name(const std::string& name);
StyleLabel style_from_index(int index);

}  // namespace dancegen
