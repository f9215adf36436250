#include "dancegen/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dancegen/errors.hpp"

namespace dancegen {

namespace body25 {

const char* joint_name(int joint) {
  static const char* kNames[kJointCount] = {
      "Nose",   "Neck",     "RShoulder", "RElbow",    "RWrist", "LShoulder", "LElbow",
      "LWrist", "MidHip",   "RHip",      "RKnee",     "RAnkle", "LHip",      "LKnee",
      "LAnkle", "REye",     "LEye",      "REar",      "LEar",   "LBigToe",   "LSmallToe",
      "LHeel",  "RBigToe",  "RSmallToe", "RHeel"};
  if (joint < 0 || joint >= kJointCount)
    throw ShapeError("joint_name: index " + std::to_string(joint) + " out of range");
  return kNames[joint];
}

}  // namespace body25

const SkeletonTopology& SkeletonTopology::body25() {
  static const SkeletonTopology topo = [] {
    using namespace dancegen::body25;
    SkeletonTopology t;
    t.joint_count = kJointCount;
    t.root = kMidHip;
    t.edges = {
        {kNose, kNeck},      {kNose, kREye},      {kNose, kLEye},     {kREye, kREar},
        {kLEye, kLEar},      {kNeck, kRShoulder}, {kRShoulder, kRElbow},
        {kRElbow, kRWrist},  {kNeck, kLShoulder}, {kLShoulder, kLElbow},
        {kLElbow, kLWrist},  {kNeck, kMidHip},    {kMidHip, kRHip},   {kRHip, kRKnee},
        {kRKnee, kRAnkle},   {kRAnkle, kRBigToe}, {kRAnkle, kRHeel},  {kRBigToe, kRSmallToe},
        {kMidHip, kLHip},    {kLHip, kLKnee},     {kLKnee, kLAnkle},  {kLAnkle, kLBigToe},
        {kLAnkle, kLHeel},   {kLBigToe, kLSmallToe}};
    t.parent.assign(kJointCount, -1);
    t.parent[kNeck] = kMidHip;
    t.parent[kNose] = kNeck;
    t.parent[kREye] = kNose;
    t.parent[kLEye] = kNose;
    t.parent[kREar] = kREye;
    t.parent[kLEar] = kLEye;
    t.parent[kRShoulder] = kNeck;
    t.parent[kRElbow] = kRShoulder;
    t.parent[kRWrist] = kRElbow;
    t.parent[kLShoulder] = kNeck;
    t.parent[kLElbow] = kLShoulder;
    t.parent[kLWrist] = kLElbow;
    t.parent[kRHip] = kMidHip;
    t.parent[kRKnee] = kRHip;
    t.parent[kRAnkle] = kRKnee;
    t.parent[kRBigToe] = kRAnkle;
    t.parent[kRSmallToe] = kRBigToe;
    t.parent[kRHeel] = kRAnkle;
    t.parent[kLHip] = kMidHip;
    t.parent[kLKnee] = kLHip;
    t.parent[kLAnkle] = kLKnee;
    t.parent[kLBigToe] = kLAnkle;
    t.parent[kLSmallToe] = kLBigToe;
    t.parent[kLHeel] = kLAnkle;
    return t;
  }();
  return topo;
}

std::vector<int> SkeletonTopology::topological_order() const {
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(joint_count));
  std::vector<bool> placed(static_cast<std::size_t>(joint_count), false);
  order.push_back(root);
  placed[static_cast<std::size_t>(root)] = true;
  // Children always have larger tree depth; repeated sweeps terminate in
  // at most joint_count passes.
  while (static_cast<int>(order.size()) < joint_count) {
    bool progress = false;
    for (int j = 0; j < joint_count; ++j) {
      if (placed[static_cast<std::size_t>(j)]) continue;
      int p = parent[static_cast<std::size_t>(j)];
      if (p >= 0 && placed[static_cast<std::size_t>(p)]) {
        order.push_back(j);
        placed[static_cast<std::size_t>(j)] = true;
        progress = true;
      }
    }
    if (!progress) throw DataError("topological_order: parent map is not a rooted tree");
  }
  return order;
}

// -------------------- normalization --------------------

namespace {

struct Box {
  double umin = 0.0, vmin = 0.0, du = 0.0, dv = 0.0, delta = 0.0;
};

// Bounding box over joints with confidence > 0.
bool grow_box(const Pose& pose, bool& any, double& umin, double& umax, double& vmin,
              double& vmax) {
  for (int j = 0; j < body25::kJointCount; ++j) {
    if (pose.confidence[static_cast<std::size_t>(j)] <= 0.0) continue;
    const auto& pt = pose.joints[static_cast<std::size_t>(j)];
    if (!any) {
      umin = umax = pt.x;
      vmin = vmax = pt.y;
      any = true;
    } else {
      umin = std::min(umin, pt.x);
      umax = std::max(umax, pt.x);
      vmin = std::min(vmin, pt.y);
      vmax = std::max(vmax, pt.y);
    }
  }
  return any;
}

Box finish_box(bool any, double umin, double umax, double vmin, double vmax) {
  if (!any) throw DataError("normalize_pose: no observed joints in frame");
  Box b;
  b.umin = umin;
  b.vmin = vmin;
  b.du = umax - umin;
  b.dv = vmax - vmin;
  b.delta = std::sqrt(b.du * b.du + b.dv * b.dv);
  if (b.delta <= 0.0)
    throw DataError("normalize_pose: degenerate pose, bounding box diagonal is zero");
  return b;
}

Pose apply_box(const Pose& pose, const Box& b) {
  Pose out = pose;
  for (int j = 0; j < body25::kJointCount; ++j) {
    auto& pt = out.joints[static_cast<std::size_t>(j)];
    pt.x = (pt.x - b.umin - b.du / 2.0) / b.delta + 0.5;
    pt.y = (pt.y - b.vmin - b.dv / 2.0) / b.delta + 0.5;
  }
  return out;
}

}  // namespace

Pose normalize_pose(const Pose& pose) {
  bool any = false;
  double umin = 0, umax = 0, vmin = 0, vmax = 0;
  grow_box(pose, any, umin, umax, vmin, vmax);
  return apply_box(pose, finish_box(any, umin, umax, vmin, vmax));
}

Motion normalize_motion(const Motion& motion, NormalizeMode mode) {
  Motion out = motion;
  if (mode == NormalizeMode::PerFrame) {
    for (auto& frame : out.frames) frame = normalize_pose(frame);
    return out;
  }
  bool any = false;
  double umin = 0, umax = 0, vmin = 0, vmax = 0;
  for (const auto& frame : motion.frames) grow_box(frame, any, umin, umax, vmin, vmax);
  Box b = finish_box(any, umin, umax, vmin, vmax);
  for (auto& frame : out.frames) frame = apply_box(frame, b);
  return out;
}

// -------------------- missing-joint recovery --------------------

Motion recover_missing_joints(const Motion& motion, const SkeletonTopology& topology) {
  if (topology.joint_count != body25::kJointCount)
    throw DataError("recover_missing_joints: topology joint count " +
                    std::to_string(topology.joint_count) + " unsupported");
  Motion out = motion;
  const int n = static_cast<int>(out.frames.size());
  if (n == 0) return out;

  auto conf = [&](int j, int t) -> double {
    return out.frames[static_cast<std::size_t>(t)].confidence[static_cast<std::size_t>(j)];
  };
  auto pos = [&](int j, int t) -> Joint2d& {
    return out.frames[static_cast<std::size_t>(t)].joints[static_cast<std::size_t>(j)];
  };

  for (int j : topology.topological_order()) {
    std::vector<bool> observed(static_cast<std::size_t>(n), false);
    bool any = false;
    for (int t = 0; t < n; ++t) {
      if (conf(j, t) > 0.0) {
        observed[static_cast<std::size_t>(t)] = true;
        any = true;
      }
    }
    if (!any)
      throw DataError(std::string("recover_missing_joints: joint ") + std::to_string(j) + " (" +
                      body25::joint_name(j) + ") is never observed");
    const int parent = topology.parent[static_cast<std::size_t>(j)];
    for (int t = 0; t < n; ++t) {
      if (observed[static_cast<std::size_t>(t)]) continue;
      // Nearest frame where this joint was observed and its parent is
      // available; equal distances resolve to the earlier frame.  Parents
      // are processed first, so after their pass they are available in
      // every frame.
      int t_ref = -1;
      for (int d = 1; d < n; ++d) {
        const int lo = t - d, hi = t + d;
        if (lo >= 0 && observed[static_cast<std::size_t>(lo)] &&
            (parent < 0 || conf(parent, lo) > 0.0)) {
          t_ref = lo;
          break;
        }
        if (hi < n && observed[static_cast<std::size_t>(hi)] &&
            (parent < 0 || conf(parent, hi) > 0.0)) {
          t_ref = hi;
          break;
        }
      }
      if (t_ref < 0)
        throw DataError(std::string("recover_missing_joints: joint ") + std::to_string(j) +
                        " (" + body25::joint_name(j) + ") has no usable reference frame");
      Joint2d ref = pos(j, t_ref);
      if (parent >= 0) {
        ref.x += pos(parent, t).x - pos(parent, t_ref).x;
        ref.y += pos(parent, t).y - pos(parent, t_ref).y;
      }
      pos(j, t) = ref;
      out.frames[static_cast<std::size_t>(t)].confidence[static_cast<std::size_t>(j)] = 0.5;
    }
  }
  return out;
}

// -------------------- spline smoothing --------------------

std::vector<double> natural_spline_resample(const std::vector<int>& positions,
                                            const std::vector<double>& values, int n) {
  if (positions.size() != values.size())
    throw ShapeError("natural_spline_resample: positions and values differ in length");
  if (positions.size() < 2)
    throw ShapeError("natural_spline_resample: need at least two knots");
  for (std::size_t i = 1; i < positions.size(); ++i) {
    if (positions[i] <= positions[i - 1])
      throw ShapeError("natural_spline_resample: knot positions must be strictly increasing");
  }
  if (positions.front() != 0 || positions.back() != n - 1)
    throw ShapeError("natural_spline_resample: knots must span frames 0 to n-1");

  const int m = static_cast<int>(positions.size());
  std::vector<double> h(static_cast<std::size_t>(m - 1));
  for (int i = 0; i < m - 1; ++i)
    h[static_cast<std::size_t>(i)] =
        static_cast<double>(positions[static_cast<std::size_t>(i + 1)] -
                            positions[static_cast<std::size_t>(i)]);

  // Second derivatives with natural end conditions, Thomas algorithm.
  std::vector<double> second(static_cast<std::size_t>(m), 0.0);
  if (m > 2) {
    const int k = m - 2;
    std::vector<double> diag(static_cast<std::size_t>(k)), rhs(static_cast<std::size_t>(k)),
        upper(static_cast<std::size_t>(k), 0.0);
    for (int i = 0; i < k; ++i) {
      const double h0 = h[static_cast<std::size_t>(i)];
      const double h1 = h[static_cast<std::size_t>(i + 1)];
      diag[static_cast<std::size_t>(i)] = 2.0 * (h0 + h1);
      if (i + 1 < k) upper[static_cast<std::size_t>(i)] = h1;
      rhs[static_cast<std::size_t>(i)] =
          6.0 * ((values[static_cast<std::size_t>(i + 2)] - values[static_cast<std::size_t>(i + 1)]) / h1 -
                 (values[static_cast<std::size_t>(i + 1)] - values[static_cast<std::size_t>(i)]) / h0);
    }
    for (int i = 1; i < k; ++i) {
      const double lower = h[static_cast<std::size_t>(i)];
      const double w = lower / diag[static_cast<std::size_t>(i - 1)];
      diag[static_cast<std::size_t>(i)] -= w * upper[static_cast<std::size_t>(i - 1)];
      rhs[static_cast<std::size_t>(i)] -= w * rhs[static_cast<std::size_t>(i - 1)];
    }
    second[static_cast<std::size_t>(k)] = rhs[static_cast<std::size_t>(k - 1)] /
                                          diag[static_cast<std::size_t>(k - 1)];
    for (int i = k - 2; i >= 0; --i) {
      second[static_cast<std::size_t>(i + 1)] =
          (rhs[static_cast<std::size_t>(i)] -
           upper[static_cast<std::size_t>(i)] * second[static_cast<std::size_t>(i + 2)]) /
          diag[static_cast<std::size_t>(i)];
    }
  }

  std::vector<double> out(static_cast<std::size_t>(n));
  int seg = 0;
  for (int x = 0; x < n; ++x) {
    while (seg < m - 2 && x > positions[static_cast<std::size_t>(seg + 1)]) ++seg;
    if (x == positions[static_cast<std::size_t>(seg)]) {
      out[static_cast<std::size_t>(x)] = values[static_cast<std::size_t>(seg)];
      continue;
    }
    if (x == positions[static_cast<std::size_t>(seg + 1)]) {
      out[static_cast<std::size_t>(x)] = values[static_cast<std::size_t>(seg + 1)];
      continue;
    }
    const double hi = h[static_cast<std::size_t>(seg)];
    const double a = (positions[static_cast<std::size_t>(seg + 1)] - x) / hi;
    const double b = (x - positions[static_cast<std::size_t>(seg)]) / hi;
    out[static_cast<std::size_t>(x)] =
        a * values[static_cast<std::size_t>(seg)] + b * values[static_cast<std::size_t>(seg + 1)] +
        ((a * a * a - a) * second[static_cast<std::size_t>(seg)] +
         (b * b * b - b) * second[static_cast<std::size_t>(seg + 1)]) *
            hi * hi / 6.0;
  }
  return out;
}

Motion smooth_motion(const Motion& motion, int knot_stride) {
  if (knot_stride < 1)
    throw ConfigError("smooth_motion: knot_stride must be >= 1, got " +
                      std::to_string(knot_stride));
  const int n = static_cast<int>(motion.frames.size());
  Motion out = motion;
  if (n < 3) return out;

  std::vector<int> knots;
  for (int t = 0; t < n - 1; t += knot_stride) knots.push_back(t);
  knots.push_back(n - 1);

  std::vector<double> series(static_cast<std::size_t>(knots.size()));
  for (int j = 0; j < body25::kJointCount; ++j) {
    for (int coord = 0; coord < 2; ++coord) {
      for (std::size_t k = 0; k < knots.size(); ++k) {
        const auto& pt =
            motion.frames[static_cast<std::size_t>(knots[k])].joints[static_cast<std::size_t>(j)];
        series[k] = coord == 0 ? pt.x : pt.y;
      }
      std::vector<double> smoothed = natural_spline_resample(knots, series, n);
      for (int t = 0; t < n; ++t) {
        auto& pt = out.frames[static_cast<std::size_t>(t)].joints[static_cast<std::size_t>(j)];
        (coord == 0 ? pt.x : pt.y) = smoothed[static_cast<std::size_t>(t)];
      }
    }
  }
  return out;
}

// -------------------- tensor bridging --------------------

Tensor motion_to_tensor(const Motion& motion) {
  const int n = static_cast<int>(motion.frames.size());
  if (n == 0) throw DataError("motion_to_tensor: motion has no frames");
  std::vector<double> data(static_cast<std::size_t>(2) * n * body25::kJointCount);
  for (int t = 0; t < n; ++t) {
    const Pose& pose = motion.frames[static_cast<std::size_t>(t)];
    for (int j = 0; j < body25::kJointCount; ++j) {
      data[static_cast<std::size_t>(t) * body25::kJointCount + j] =
          pose.joints[static_cast<std::size_t>(j)].x;
      data[static_cast<std::size_t>(n) * body25::kJointCount +
           static_cast<std::size_t>(t) * body25::kJointCount + j] =
          pose.joints[static_cast<std::size_t>(j)].y;
    }
  }
  return Tensor::from_data({2, n, body25::kJointCount}, std::move(data));
}

Motion tensor_from_values(const std::vector<double>& values, int frames, int fps,
                          std::optional<StyleLabel> style) {
  Motion m;
  m.fps = fps;
  m.style = style;
  m.frames.resize(static_cast<std::size_t>(frames));
  const std::size_t plane = static_cast<std::size_t>(frames) * body25::kJointCount;
  for (int t = 0; t < frames; ++t) {
    Pose& pose = m.frames[static_cast<std::size_t>(t)];
    for (int j = 0; j < body25::kJointCount; ++j) {
      pose.joints[static_cast<std::size_t>(j)].x =
          values[static_cast<std::size_t>(t) * body25::kJointCount + j];
      pose.joints[static_cast<std::size_t>(j)].y =
          values[plane + static_cast<std::size_t>(t) * body25::kJointCount + j];
      pose.confidence[static_cast<std::size_t>(j)] = 1.0;
    }
  }
  return m;
}

Motion tensor_to_motion(const Tensor& t, int fps, std::optional<StyleLabel> style) {
  const Shape& s = t.shape();
  if (s.size() != 3 || s[0] != 2 || s[2] != body25::kJointCount)
    throw ShapeError("tensor_to_motion: expected (2,N,25), got " + shape_str(s));
  return tensor_from_values(t.data(), s[1], fps, style);
}

// -------------------- motion files --------------------

Motion motion_from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("motion: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("motion: top level must be an object");
  if (!j.contains("fps") || !j["fps"].is_number_integer())
    throw DataError("motion: missing integer field 'fps'");
  Motion m;
  m.fps = j["fps"].get<int>();
  if (m.fps <= 0) throw DataError("motion: fps must be positive");
  if (j.contains("style") && !j["style"].is_null()) {
    if (!j["style"].is_string()) throw DataError("motion: 'style' must be a string or null");
    m.style = style_from_name(j["style"].get<std::string>());
  }
  if (!j.contains("frames") || !j["frames"].is_array())
    throw DataError("motion: missing array field 'frames'");
  const auto& frames = j["frames"];
  m.frames.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& fj = frames[t];
    if (!fj.is_array() || fj.size() != body25::kJointCount)
      throw DataError("motion: frames[" + std::to_string(t) + "] must list " +
                      std::to_string(body25::kJointCount) + " joints");
    Pose pose;
    for (std::size_t k = 0; k < fj.size(); ++k) {
      const auto& joint = fj[k];
      if (!joint.is_array() || joint.size() != 3 || !joint[0].is_number() ||
          !joint[1].is_number() || !joint[2].is_number())
        throw DataError("motion: frames[" + std::to_string(t) + "][" + std::to_string(k) +
                        "] must be [x, y, confidence]");
      pose.joints[k].x = joint[0].get<double>();
      pose.joints[k].y = joint[1].get<double>();
      double c = joint[2].get<double>();
      if (c < 0.0 || c > 1.0)
        throw DataError("motion: frames[" + std::to_string(t) + "][" + std::to_string(k) +
                        "] confidence " + std::to_string(c) + " outside [0,1]");
      pose.confidence[k] = c;
    }
    m.frames.push_back(pose);
  }
  return m;
}

std::string motion_to_json_string(const Motion& motion) {
  nlohmann::json j;
  j["fps"] = motion.fps;
  j["style"] = motion.style ? nlohmann::json(style_name(*motion.style)) : nlohmann::json();
  nlohmann::json frames = nlohmann::json::array();
  for (const Pose& pose : motion.frames) {
    nlohmann::json frame = nlohmann::json::array();
    for (int k = 0; k < body25::kJointCount; ++k) {
      frame.push_back({pose.joints[static_cast<std::size_t>(k)].x,
                       pose.joints[static_cast<std::size_t>(k)].y,
                       pose.confidence[static_cast<std::size_t>(k)]});
    }
    frames.push_back(std::move(frame));
  }
  j["frames"] = std::move(frames);
  return j.dump();
}

Motion load_motion(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("motion: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return motion_from_json_string(buf.str());
}

void save_motion(const std::string& path, const Motion& motion) {
  std::ofstream os(path);
  if (!os) throw DataError("motion: cannot open for writing " + path);
  os << motion_to_json_string(motion);
  if (!os) throw DataError("motion: write failed " + path);
}

}  // namespace dancegen
