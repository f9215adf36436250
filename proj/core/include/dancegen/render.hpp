#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <dancegen/skeleton.hpp>

namespace dancegen {

/// Shared mapping from motion coordinates to a fixed viewport, computed
/// once over the whole clip so every frame lands in the same place.
struct RenderLayout {
  int width = 512;
  int height = 512;
  /// Motion-space box mapped onto the viewport, margin included.
  double min_x = 0.0;
  double min_y = 0.0;
  double scale = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;

  double to_px_x(double x) const { return offset_x + (x - min_x) * scale; }
  double to_px_y(double y) const { return offset_y + (y - min_y) * scale; }
};

/// Fits the motion's bounding box into width x height, keeping the aspect
/// ratio, centred, with a fractional margin on all sides.  Throws DataError
/// when any frame collapses to a single point or a coordinate is not
/// finite.
RenderLayout layout_for(const Motion& motion, int width = 512,
                        int height = 512, double margin = 0.05);

/// One SVG document drawing the 24 skeleton edges of the pose as lines and
/// the joints as dots.
std::string pose_svg(const Pose& pose, const RenderLayout& layout);

/// Row-major palette-indexed image.
struct IndexedImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  IndexedImage(int w, int h)
      : width(w), height(h),
        pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}
};

/// Rasterizes the skeleton onto a white canvas: edges in black, joints as
/// small squares in the accent color.
IndexedImage rasterize_pose(const Pose& pose, const RenderLayout& layout);

/// Encodes frames as a looping animated GIF (89a, 4-color global palette).
/// All frames must match the first frame's dimensions.  delay_cs is the
/// per-frame delay in centiseconds.
std::vector<std::uint8_t> encode_gif(const std::vector<IndexedImage>& frames,
                                     int delay_cs);

}  // namespace dancegen
