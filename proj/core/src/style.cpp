#include "dancegen/style.hpp"

#include <algorithm>
#include <cctype>

#include "dancegen/errors.hpp"

namespace dancegen {

const char* style_name(StyleLabel s) {
  switch (s) {
    case StyleLabel::Ballet: return "ballet";
    case StyleLabel::MJ: return "mj";
    case StyleLabel::Salsa: return "salsa";
  }
  throw ConfigError("style_name: invalid style value " +
                    std::to_string(static_cast<int>(s)));
}

StyleLabel style_from_name(const std::string& name) {
  std::string lower(name.size(), '\0');
  std::transform(name.begin(), name.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "ballet") return StyleLabel::Ballet;
  if (lower == "mj") return StyleLabel::MJ;
  if (lower == "salsa") return StyleLabel::Salsa;
  throw ConfigError("unknown style '" + name + "' (expected ballet, mj, or salsa)");
}

StyleLabel style_from_index(int index) {
  if (index < 0 || index >= kNumStyles)
    throw ConfigError("style index " + std::to_string(index) + " out of range");
  return static_cast<StyleLabel>(index);
}

}  // namespace dancegen
