#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dancegen/style.hpp"
#include "dancegen/tensor.hpp"

namespace dancegen {

// OpenPose BODY_25 joint indices.
namespace body25 {
inline constexpr int kJointCount = 25;
enum Joint : int {
  kNose = 0,
  kNeck = 1,
  kRShoulder = 2,
  kRElbow = 3,
  kRWrist = 4,
  kLShoulder = 5,
  kLElbow = 6,
  kLWrist = 7,
  kMidHip = 8,
  kRHip = 9,
  kRKnee = 10,
  kRAnkle = 11,
  kLHip = 12,
  kLKnee = 13,
  kLAnkle = 14,
  kREye = 15,
  kLEye = 16,
  kREar = 17,
  kLEar = 18,
  kLBigToe = 19,
  kLSmallToe = 20,
  kLHeel = 21,
  kRBigToe = 22,
  kRSmallToe = 23,
  kRHeel = 24,
};
const char* joint_name(int joint);
}  // namespace body25

/// Kinematic tree of a 2D skeleton: edge list plus a parent map rooted at
/// the mid-hip.  The BODY_25 instance has 25 joints and 24 edges.
struct SkeletonTopology {
  int joint_count = 0;
  int root = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> parent;  // parent[root] == -1

  static const SkeletonTopology& body25();

  /// Joint indices ordered so every joint appears after its parent.
  std::vector<int> topological_order() const;
};

struct Joint2d {
  double x = 0.0;
  double y = 0.0;
};

/// One frame of 2D joints with per-joint detector confidence in [0,1];
/// confidence 0 marks a missing joint.
struct Pose {
  std::array<Joint2d, body25::kJointCount> joints{};
  std::array<double, body25::kJointCount> confidence{};
};

/// A pose sequence with its frame rate and optional style annotation.
struct Motion {
  int fps = 24;
  std::optional<StyleLabel> style;
  std::vector<Pose> frames;
};

enum class NormalizeMode { PerFrame, PerSequence };

/// Maps joints into bounding-box coordinates: subtract the box minimum and
/// half extents, divide by the box diagonal, recentre at 0.5.  Joints with
/// confidence 0 do not shape the box but are transformed with the rest.
/// Throws DataError when the box diagonal is zero (degenerate pose).
Pose normalize_pose(const Pose& pose);

/// Applies normalize_pose to every frame; PerSequence computes one bounding
/// box over all frames and applies the same transform throughout.
Motion normalize_motion(const Motion& motion, NormalizeMode mode = NormalizeMode::PerFrame);

/// Fills joints with confidence 0 by replaying their parent's motion:
/// J(t) = J(t_ref) + parent(t) - parent(t_ref), where t_ref is the nearest
/// frame (earlier wins ties) at which the joint was observed and its parent
/// is available.  The root copies from its nearest observed frame.
/// Recovered joints get confidence 0.5.  A joint observed in no frame at
/// all raises DataError naming it.
Motion recover_missing_joints(const Motion& motion,
                              const SkeletonTopology& topology = SkeletonTopology::body25());

/// Natural cubic spline smoothing per joint coordinate: knots are frames
/// {0, knot_stride, 2*knot_stride, ...} plus the final frame, and every
/// frame is re-evaluated from the spline.  Knot frames reproduce exactly.
Motion smooth_motion(const Motion& motion, int knot_stride = 4);

/// Natural cubic spline through (positions[i], values[i]) evaluated at
/// 0..n-1.  Positions must be strictly increasing, include 0 and n-1.
std::vector<double> natural_spline_resample(const std::vector<int>& positions,
                                            const std::vector<double>& values, int n);

// -------------------- tensor bridging --------------------

/// Motion coordinates as a (2, N, 25) tensor: channel 0 holds x, channel 1
/// holds y.  Confidence is dropped.
Tensor motion_to_tensor(const Motion& motion);

/// Inverse of motion_to_tensor; all confidences are set to 1.
Motion tensor_from_values(const std::vector<double>& values, int frames, int fps,
                          std::optional<StyleLabel> style);
Motion tensor_to_motion(const Tensor& t, int fps, std::optional<StyleLabel> style);

// -------------------- motion files --------------------
// Schema: {"fps": int, "style": "ballet"|"mj"|"salsa"|null,
//          "frames": [[[x, y, confidence] x 25], ...]}

Motion motion_from_json_string(const std::string& text);
std::string motion_to_json_string(const Motion& motion);
Motion load_motion(const std::string& path);
void save_motion(const std::string& path, const Motion& motion);

}  // namespace dancegen
