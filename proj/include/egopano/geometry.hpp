#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "egopano/ingest.hpp"
#include "egopano/types.hpp"

namespace egopano {

// Projective map from a frame's plane onto the base frame's plane, stored with
// m(2,2) = 1. Construction rejects |m(2,2)| < 1e-12 and |det| <= 1e-12.
class Homography {
 public:
  Homography() : m_(Mat3::Identity()) {}
  explicit Homography(const Mat3& m);

  static Homography identity() { return {}; }
  static Homography from_row_major(const std::array<double, 9>& values);

  const Mat3& matrix() const { return m_; }
  std::array<double, 9> row_major() const;
  Homography inverse() const;

  friend bool operator==(const Homography& a, const Homography& b) { return a.m_ == b.m_; }

 private:
  Mat3 m_;
};

struct PointPair {
  Vec2 src;  // non-base frame
  Vec2 dst;  // base frame
};

struct SVD3 {
  Mat3 U;
  Mat3 V;
  Eigen::Vector3d sigma;  // descending, non-negative
};

struct RansacParams {
  double reproj_thresh = 3.0;
  double confidence = 0.995;
  int max_iters = 2000;
};

struct RansacResult {
  Homography homography;
  std::vector<bool> inlier_mask;
  int iterations_run = 0;

  int inlier_count() const;
};

struct RefineResult {
  Homography homography;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
};

// (u/w, v/w) with (u, v, w) = H (x, y, 1). Throws PointAtInfinity when |w| <= 1e-12.
Vec2 project_point(const Mat3& h, Vec2 p);
inline Vec2 project_point(const Homography& h, Vec2 p) { return project_point(h.matrix(), p); }

// Third homogeneous coordinate of H (x, y, 1).
double projective_depth(const Mat3& h, Vec2 p);

// Images of (0,0), (w,0), (w,h), (0,h).
Quad project_corners(const Homography& h, double width, double height);
Quad project_quad(const Homography& h, const Quad& quad);

double reprojection_error(const Homography& h, const PointPair& pair);

// Normalized DLT least-squares fit over all pairs.
Homography dlt_homography(std::span<const PointPair> pairs);

// True when any three of the four points are (nearly) collinear.
bool has_collinear_triple(const std::array<Vec2, 4>& pts);

RansacResult ransac_homography(std::span<const PointPair> pairs, const RansacParams& params, std::uint64_t seed);

// Sum of squared forward reprojection errors.
double reprojection_cost(const Homography& h, std::span<const PointPair> pairs);

// Levenberg-Marquardt over the 8 free entries of H. Never returns a model with
// higher cost than the input.
RefineResult refine_lm(const Homography& h, std::span<const PointPair> inliers);

// K * H * K^-1
Mat3 calibrate_homography(const Mat3& h, const Intrinsics& k);

SVD3 svd3(const Mat3& m);

}  // namespace egopano
