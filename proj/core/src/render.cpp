#include "dancegen/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <utility>

#include "dancegen/errors.hpp"

namespace dancegen {

namespace {

constexpr std::uint8_t kBackground = 0;
constexpr std::uint8_t kEdgeColor = 1;
constexpr std::uint8_t kJointColor = 2;

const std::uint8_t kPalette[4][3] = {
    {255, 255, 255}, {26, 26, 26}, {196, 69, 45}, {200, 200, 200}};

struct Box {
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
};

Box frame_box(const Pose& pose, int frame_index) {
  Box b;
  bool first = true;
  for (int j = 0; j < body25::kJointCount; ++j) {
    double x = pose.joints[static_cast<std::size_t>(j)].x;
    double y = pose.joints[static_cast<std::size_t>(j)].y;
    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw DataError("layout_for: frame " + std::to_string(frame_index) +
                      " joint " + std::to_string(j) +
                      " has a non-finite coordinate");
    }
    if (first) {
      b = {x, y, x, y};
      first = false;
    } else {
      b.min_x = std::min(b.min_x, x);
      b.min_y = std::min(b.min_y, y);
      b.max_x = std::max(b.max_x, x);
      b.max_y = std::max(b.max_y, y);
    }
  }
  return b;
}

void put_pixel(IndexedImage& img, int x, int y, std::uint8_t color) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  img.pixels[static_cast<std::size_t>(y) * img.width + x] = color;
}

void draw_line(IndexedImage& img, int x0, int y0, int x1, int y1,
               std::uint8_t color) {
  int dx = std::abs(x1 - x0);
  int dy = -std::abs(y1 - y0);
  int sx = x0 < x1 ? 1 : -1;
  int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put_pixel(img, x0, y0, color);
    put_pixel(img, x0 + 1, y0, color);
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

/// GIF-variant LZW: emits codes LSB-first into 255-byte sub-blocks.
class LzwWriter {
 public:
  LzwWriter(std::vector<std::uint8_t>& out, int min_code_size)
      : out_(out), min_code_size_(min_code_size) {
    clear_code_ = 1 << min_code_size_;
    end_code_ = clear_code_ + 1;
    reset_table();
  }

  void encode(const std::vector<std::uint8_t>& pixels) {
    emit(clear_code_);
    int current = -1;
    for (std::uint8_t px : pixels) {
      if (current < 0) {
        current = px;
        continue;
      }
      auto it = table_.find({current, px});
      if (it != table_.end()) {
        current = it->second;
        continue;
      }
      emit(current);
      if (next_code_ == 4096) {
        emit(clear_code_);
        reset_table();
      } else {
        table_[{current, px}] = next_code_++;
        if (next_code_ - 1 == (1 << code_width_) && code_width_ < 12) {
          ++code_width_;
        }
      }
      current = px;
    }
    if (current >= 0) emit(current);
    emit(end_code_);
    flush_bits();
    flush_block();
    out_.push_back(0x00);
  }

 private:
  void reset_table() {
    table_.clear();
    next_code_ = end_code_ + 1;
    code_width_ = min_code_size_ + 1;
  }

  void emit(int code) {
    bit_buffer_ |= static_cast<std::uint32_t>(code) << bit_count_;
    bit_count_ += code_width_;
    while (bit_count_ >= 8) {
      block_.push_back(static_cast<std::uint8_t>(bit_buffer_ & 0xFF));
      bit_buffer_ >>= 8;
      bit_count_ -= 8;
      if (block_.size() == 255) flush_block();
    }
  }

  void flush_bits() {
    if (bit_count_ > 0) {
      block_.push_back(static_cast<std::uint8_t>(bit_buffer_ & 0xFF));
      bit_buffer_ = 0;
      bit_count_ = 0;
      if (block_.size() == 255) flush_block();
    }
  }

  void flush_block() {
    if (block_.empty()) return;
    out_.push_back(static_cast<std::uint8_t>(block_.size()));
    out_.insert(out_.end(), block_.begin(), block_.end());
    block_.clear();
  }

  std::vector<std::uint8_t>& out_;
  int min_code_size_;
  int clear_code_ = 0;
  int end_code_ = 0;
  std::map<std::pair<int, int>, int> table_;
  int next_code_ = 0;
  int code_width_ = 0;
  std::uint32_t bit_buffer_ = 0;
  int bit_count_ = 0;
  std::vector<std::uint8_t> block_;
};

void push_u16(std::vector<std::uint8_t>& out, int value) {
  out.push_back(static_cast<std::uint8_t>(value & 0xFF));
  out.push_back(static_cast<std::uint8_t>((value >> 8) & 0xFF));
}

}  // namespace

RenderLayout layout_for(const Motion& motion, int width, int height,
                        double margin) {
  if (motion.frames.empty()) {
    throw DataError("layout_for: motion has no frames");
  }
  if (width < 16 || height < 16) {
    throw ConfigError("layout_for: viewport must be at least 16x16");
  }
  if (margin < 0.0 || margin >= 0.5) {
    throw ConfigError("layout_for: margin must lie in [0, 0.5)");
  }
  Box all;
  bool first = true;
  for (std::size_t f = 0; f < motion.frames.size(); ++f) {
    Box b = frame_box(motion.frames[f], static_cast<int>(f));
    double w = b.max_x - b.min_x;
    double h = b.max_y - b.min_y;
    if (w == 0.0 && h == 0.0) {
      throw DataError("layout_for: frame " + std::to_string(f) +
                      " collapses to a single point");
    }
    if (first) {
      all = b;
      first = false;
    } else {
      all.min_x = std::min(all.min_x, b.min_x);
      all.min_y = std::min(all.min_y, b.min_y);
      all.max_x = std::max(all.max_x, b.max_x);
      all.max_y = std::max(all.max_y, b.max_y);
    }
  }
  double extent_x = all.max_x - all.min_x;
  double extent_y = all.max_y - all.min_y;
  double usable_w = width * (1.0 - 2.0 * margin);
  double usable_h = height * (1.0 - 2.0 * margin);
  double scale = std::numeric_limits<double>::infinity();
  if (extent_x > 0.0) scale = std::min(scale, usable_w / extent_x);
  if (extent_y > 0.0) scale = std::min(scale, usable_h / extent_y);

  RenderLayout layout;
  layout.width = width;
  layout.height = height;
  layout.min_x = all.min_x;
  layout.min_y = all.min_y;
  layout.scale = scale;
  layout.offset_x = (width - extent_x * scale) / 2.0;
  layout.offset_y = (height - extent_y * scale) / 2.0;
  return layout;
}

std::string pose_svg(const Pose& pose, const RenderLayout& layout) {
  const SkeletonTopology& topo = SkeletonTopology::body25();
  std::ostringstream svg;
  char buf[192];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
                "height=\"%d\" viewBox=\"0 0 %d %d\">\n",
                layout.width, layout.height, layout.width, layout.height);
  svg << buf;
  std::snprintf(buf, sizeof(buf),
                "<rect width=\"%d\" height=\"%d\" fill=\"#ffffff\"/>\n",
                layout.width, layout.height);
  svg << buf;
  for (const auto& [a, b] : topo.edges) {
    const Joint2d& ja = pose.joints[static_cast<std::size_t>(a)];
    const Joint2d& jb = pose.joints[static_cast<std::size_t>(b)];
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                  "stroke=\"#1a1a1a\" stroke-width=\"2\" "
                  "stroke-linecap=\"round\"/>\n",
                  layout.to_px_x(ja.x), layout.to_px_y(ja.y),
                  layout.to_px_x(jb.x), layout.to_px_y(jb.y));
    svg << buf;
  }
  for (int j = 0; j < body25::kJointCount; ++j) {
    const Joint2d& joint = pose.joints[static_cast<std::size_t>(j)];
    std::snprintf(buf, sizeof(buf),
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"#c4452d\"/>\n",
                  layout.to_px_x(joint.x), layout.to_px_y(joint.y));
    svg << buf;
  }
  svg << "</svg>\n";
  return svg.str();
}

IndexedImage rasterize_pose(const Pose& pose, const RenderLayout& layout) {
  IndexedImage img(layout.width, layout.height);
  std::fill(img.pixels.begin(), img.pixels.end(), kBackground);
  const SkeletonTopology& topo = SkeletonTopology::body25();
  auto px = [&](double v) { return static_cast<int>(std::lround(v)); };
  for (const auto& [a, b] : topo.edges) {
    const Joint2d& ja = pose.joints[static_cast<std::size_t>(a)];
    const Joint2d& jb = pose.joints[static_cast<std::size_t>(b)];
    draw_line(img, px(layout.to_px_x(ja.x)), px(layout.to_px_y(ja.y)),
              px(layout.to_px_x(jb.x)), px(layout.to_px_y(jb.y)), kEdgeColor);
  }
  for (int j = 0; j < body25::kJointCount; ++j) {
    const Joint2d& joint = pose.joints[static_cast<std::size_t>(j)];
    int cx = px(layout.to_px_x(joint.x));
    int cy = px(layout.to_px_y(joint.y));
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        put_pixel(img, cx + dx, cy + dy, kJointColor);
      }
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_gif(const std::vector<IndexedImage>& frames,
                                     int delay_cs) {
  if (frames.empty()) {
    throw DataError("encode_gif: no frames");
  }
  int width = frames[0].width;
  int height = frames[0].height;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].width != width || frames[i].height != height) {
      throw ShapeError("encode_gif: frame " + std::to_string(i) +
                       " size differs from the first frame");
    }
  }
  if (delay_cs < 1) delay_cs = 1;

  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'G', 'I', 'F', '8', '9', 'a'});
  push_u16(out, width);
  push_u16(out, height);
  out.push_back(0xF1);  // global color table, 8-bit primaries, 4 entries
  out.push_back(0x00);  // background index
  out.push_back(0x00);  // square pixels
  for (const auto& rgb : kPalette) {
    out.insert(out.end(), {rgb[0], rgb[1], rgb[2]});
  }
  // Loop forever.
  out.insert(out.end(), {0x21, 0xFF, 0x0B});
  const char* netscape = "NETSCAPE2.0";
  out.insert(out.end(), netscape, netscape + 11);
  out.insert(out.end(), {0x03, 0x01, 0x00, 0x00, 0x00});

  for (const IndexedImage& frame : frames) {
    out.insert(out.end(), {0x21, 0xF9, 0x04, 0x04});
    push_u16(out, delay_cs);
    out.insert(out.end(), {0x00, 0x00});
    out.push_back(0x2C);
    push_u16(out, 0);
    push_u16(out, 0);
    push_u16(out, width);
    push_u16(out, height);
    out.push_back(0x00);
    out.push_back(0x02);  // LZW minimum code size for a 4-color palette
    LzwWriter lzw(out, 2);
    lzw.encode(frame.pixels);
  }
  out.push_back(0x3B);
  return out;
}

}  // namespace dancegen
