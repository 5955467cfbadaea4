#include "egopano/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "egopano/error.hpp"
#include "egopano/random.hpp"

namespace egopano {

namespace {

constexpr double kTinyW = 1e-12;

// Similarity that moves the centroid to the origin and the mean distance to sqrt(2).
Mat3 hartley_transform(std::span<const Vec2> pts) {
  double cx = 0.0, cy = 0.0;
  for (const Vec2& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const Vec2& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 0.0) || !std::isfinite(mean_dist)) {
    fail(ErrorCode::DegenerateConfiguration, "all points coincide");
  }
  const double s = std::sqrt(2.0) / mean_dist;
  Mat3 t;
  t << s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0;
  return t;
}

Vec2 apply_affine(const Mat3& t, Vec2 p) {
  return {t(0, 0) * p.x + t(0, 1) * p.y + t(0, 2), t(1, 0) * p.x + t(1, 1) * p.y + t(1, 2)};
}

std::vector<Vec2> sources(std::span<const PointPair> pairs) {
  std::vector<Vec2> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.src);
  return out;
}

std::vector<Vec2> targets(std::span<const PointPair> pairs) {
  std::vector<Vec2> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.dst);
  return out;
}

double cross(Vec2 o, Vec2 a, Vec2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

}  // namespace

Homography::Homography(const Mat3& m) {
  if (!m.allFinite()) fail(ErrorCode::DegenerateConfiguration, "homography has non-finite entries");
  if (std::abs(m(2, 2)) < 1e-12) fail(ErrorCode::DegenerateConfiguration, "homography has m22 ~ 0");
  m_ = m / m(2, 2);
  if (std::abs(m_.determinant()) <= 1e-12) fail(ErrorCode::DegenerateConfiguration, "homography is singular");
}

Homography Homography::from_row_major(const std::array<double, 9>& v) {
  Mat3 m;
  m << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
  return Homography(m);
}

std::array<double, 9> Homography::row_major() const {
  std::array<double, 9> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(r * 3 + c)] = m_(r, c);
  }
  return out;
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

int RansacResult::inlier_count() const {
  return static_cast<int>(std::count(inlier_mask.begin(), inlier_mask.end(), true));
}

double projective_depth(const Mat3& h, Vec2 p) { return h(2, 0) * p.x + h(2, 1) * p.y + h(2, 2); }

Vec2 project_point(const Mat3& h, Vec2 p) {
  const double w = projective_depth(h, p);
  if (!(std::abs(w) > kTinyW)) fail(ErrorCode::PointAtInfinity, "point maps to infinity");
  const double u = h(0, 0) * p.x + h(0, 1) * p.y + h(0, 2);
  const double v = h(1, 0) * p.x + h(1, 1) * p.y + h(1, 2);
  return {u / w, v / w};
}

Quad project_quad(const Homography& h, const Quad& quad) {
  Quad out;
  for (std::size_t i = 0; i < 4; ++i) out[i] = project_point(h, quad[i]);
  return out;
}

Quad project_corners(const Homography& h, double width, double height) {
  return project_quad(h, Quad{Vec2{0.0, 0.0}, Vec2{width, 0.0}, Vec2{width, height}, Vec2{0.0, height}});
}

double reprojection_error(const Homography& h, const PointPair& pair) {
  return distance(project_point(h, pair.src), pair.dst);
}

double reprojection_cost(const Homography& h, std::span<const PointPair> pairs) {
  double cost = 0.0;
  for (const auto& p : pairs) {
    const double e = reprojection_error(h, p);
    cost += e * e;
  }
  return cost;
}

Homography dlt_homography(std::span<const PointPair> pairs) {
  const std::size_t n = pairs.size();
  if (n < 4) fail(ErrorCode::InsufficientPairs, "DLT needs at least 4 correspondences");
  const auto src = sources(pairs);
  const auto dst = targets(pairs);
  const Mat3 ts = hartley_transform(src);
  const Mat3 td = hartley_transform(dst);

  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 s = apply_affine(ts, src[i]);
    const Vec2 d = apply_affine(td, dst[i]);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << 0.0, 0.0, 0.0, -s.x, -s.y, -1.0, d.y * s.x, d.y * s.y, d.y;
    a.row(r + 1) << s.x, s.y, 1.0, 0.0, 0.0, 0.0, -d.x * s.x, -d.x * s.y, -d.x;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A rank-8 system has a one-dimensional null space; anything lower is degenerate.
  if (sv.size() < 8 || !(sv(7) > 1e-10 * sv(0))) {
    fail(ErrorCode::DegenerateConfiguration, "correspondences do not determine a homography");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography(td.inverse() * hn * ts);
}

bool has_collinear_triple(const std::array<Vec2, 4>& pts) {
  static constexpr int kTriples[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  for (const auto& t : kTriples) {
    const Vec2 a = pts[static_cast<std::size_t>(t[0])];
    const Vec2 b = pts[static_cast<std::size_t>(t[1])];
    const Vec2 c = pts[static_cast<std::size_t>(t[2])];
    const double scale = distance(a, b) * distance(a, c);
    if (!(std::abs(cross(a, b, c)) > 1e-6 * scale)) return true;
  }
  return false;
}

RansacResult ransac_homography(std::span<const PointPair> pairs, const RansacParams& params, std::uint64_t seed) {
  const std::size_t n = pairs.size();
  if (n < 4) fail(ErrorCode::InsufficientPairs, "RANSAC needs at least 4 correspondences");
  if (!(params.reproj_thresh > 0.0)) fail(ErrorCode::InvalidArgument, "reprojection threshold must be positive");
  if (!(params.confidence > 0.0 && params.confidence < 1.0)) {
    fail(ErrorCode::InvalidArgument, "confidence must lie in (0, 1)");
  }

  auto score = [&](const Homography& h, std::vector<bool>& mask) {
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bool inlier = false;
      if (std::abs(projective_depth(h.matrix(), pairs[i].src)) > kTinyW) {
        inlier = reprojection_error(h, pairs[i]) < params.reproj_thresh;
      }
      mask[i] = inlier;
      count += inlier ? 1 : 0;
    }
    return count;
  };

  Rng rng(seed);
  std::vector<bool> mask(n), best_mask(n, false);
  Homography best;
  int best_count = 0;
  long needed = params.max_iters;
  int iter = 0;
  std::array<std::size_t, 4> idx{};
  std::array<PointPair, 4> sample{};
  while (iter < needed) {
    ++iter;
    for (std::size_t k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = static_cast<std::size_t>(uniform_index(rng, n));
        fresh = std::find(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx[k]) ==
                idx.begin() + static_cast<std::ptrdiff_t>(k);
      }
      sample[k] = pairs[idx[k]];
    }
    const std::array<Vec2, 4> s = {sample[0].src, sample[1].src, sample[2].src, sample[3].src};
    const std::array<Vec2, 4> d = {sample[0].dst, sample[1].dst, sample[2].dst, sample[3].dst};
    if (has_collinear_triple(s) || has_collinear_triple(d)) continue;
    Homography h;
    try {
      h = dlt_homography(sample);
    } catch (const Error&) {
      continue;
    }
    const int count = score(h, mask);
    if (count > best_count) {
      best_count = count;
      best = h;
      best_mask = mask;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double p_all_inliers = std::pow(w, 4.0);
      if (p_all_inliers >= 1.0 - 1e-15) {
        needed = iter;
      } else {
        const double k = std::ceil(std::log(1.0 - params.confidence) / std::log(1.0 - p_all_inliers));
        needed = std::min<long>(params.max_iters, static_cast<long>(std::min(k, 1e9)));
      }
    }
  }
  if (best_count < 4) fail(ErrorCode::NoModelFound, "no sample reached 4 inliers");

  RansacResult result{best, best_mask, iter};
  std::vector<PointPair> inliers;
  for (std::size_t i = 0; i < n; ++i) {
    if (best_mask[i]) inliers.push_back(pairs[i]);
  }
  try {
    const Homography refit = dlt_homography(inliers);
    const int refit_count = score(refit, mask);
    if (refit_count >= 4) {
      result.homography = refit;
      result.inlier_mask = mask;
    }
  } catch (const Error&) {
    // Keep the minimal-sample model.
  }
  return result;
}

namespace {

// Parameterizes H through its normalized-coordinate form Hn = Td H Ts^-1 with
// Hn(2,2) = 1, which keeps the eight unknowns on a common scale.
struct LmProblem {
  std::span<const PointPair> pairs;
  Mat3 ts, td_inv;

  Mat3 to_pixel(const Eigen::Matrix<double, 8, 1>& p) const {
    Mat3 hn;
    hn << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), 1.0;
    return td_inv * hn * ts;
  }

  // Returns false when some source point maps to infinity.
  bool residuals(const Eigen::Matrix<double, 8, 1>& p, Eigen::VectorXd& r) const {
    const Mat3 h = to_pixel(p);
    r.resize(static_cast<Eigen::Index>(2 * pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const double w = projective_depth(h, pairs[i].src);
      if (!(std::abs(w) > kTinyW)) return false;
      const Vec2 q = project_point(h, pairs[i].src);
      r(static_cast<Eigen::Index>(2 * i)) = q.x - pairs[i].dst.x;
      r(static_cast<Eigen::Index>(2 * i + 1)) = q.y - pairs[i].dst.y;
    }
    return r.allFinite();
  }

  double cost(const Eigen::Matrix<double, 8, 1>& p) const {
    Eigen::VectorXd r;
    if (!residuals(p, r)) return std::numeric_limits<double>::infinity();
    return r.squaredNorm();
  }
};

}  // namespace

RefineResult refine_lm(const Homography& h, std::span<const PointPair> inliers) {
  if (inliers.size() < 4) fail(ErrorCode::InsufficientPairs, "LM refinement needs at least 4 inliers");
  const auto src = sources(inliers);
  const auto dst = targets(inliers);
  const Mat3 ts = hartley_transform(src);
  const Mat3 td = hartley_transform(dst);
  const LmProblem problem{inliers, ts, td.inverse()};

  const double initial_cost = reprojection_cost(h, inliers);
  RefineResult result{h, initial_cost, initial_cost, 0};

  Mat3 hn = td * h.matrix() * ts.inverse();
  if (std::abs(hn(2, 2)) < 1e-12) return result;
  hn /= hn(2, 2);
  Eigen::Matrix<double, 8, 1> p;
  p << hn(0, 0), hn(0, 1), hn(0, 2), hn(1, 0), hn(1, 1), hn(1, 2), hn(2, 0), hn(2, 1);

  double cost = problem.cost(p);
  if (!std::isfinite(cost)) return result;

  const auto m = static_cast<Eigen::Index>(2 * inliers.size());
  Eigen::VectorXd r(m), rp(m), rm(m);
  Eigen::Matrix<double, Eigen::Dynamic, 8> jac(m, 8);
  double lambda = 1e-3;
  int consecutive_failures = 0;
  int singular_failures = 0;
  bool converged = false;
  int iterations = 0;

  while (iterations < 100 && !converged && cost > 0.0) {
    ++iterations;
    problem.residuals(p, r);
    bool jacobian_ok = true;
    for (int j = 0; j < 8; ++j) {
      const double step = 1e-6 * std::max(std::abs(p(j)), 1.0);
      Eigen::Matrix<double, 8, 1> hi = p, lo = p;
      hi(j) += step;
      lo(j) -= step;
      if (!problem.residuals(hi, rp) || !problem.residuals(lo, rm)) {
        jacobian_ok = false;
        break;
      }
      jac.col(j) = (rp - rm) / (2.0 * step);
    }
    if (!jacobian_ok) break;

    const Eigen::Matrix<double, 8, 8> jtj = jac.transpose() * jac;
    const Eigen::Matrix<double, 8, 1> g = jac.transpose() * r;
    if (!(g.norm() > 0.0)) break;

    bool accepted = false;
    while (!accepted) {
      Eigen::Matrix<double, 8, 8> damped = jtj;
      for (int j = 0; j < 8; ++j) damped(j, j) += lambda * std::max(jtj(j, j), 1e-12);
      Eigen::LDLT<Eigen::Matrix<double, 8, 8>> ldlt(damped);
      const Eigen::Matrix<double, 8, 1> delta = ldlt.solve(-g);
      if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
        if (++singular_failures >= 20) {
          fail(ErrorCode::SingularNormalEquations, "normal equations stayed singular under damping");
        }
        lambda *= 10.0;
        continue;
      }
      singular_failures = 0;
      const Eigen::Matrix<double, 8, 1> candidate = p + delta;
      const double candidate_cost = problem.cost(candidate);
      if (candidate_cost < cost) {
        const double relative_decrease = (cost - candidate_cost) / cost;
        p = candidate;
        cost = candidate_cost;
        lambda *= 0.1;
        consecutive_failures = 0;
        accepted = true;
        if (relative_decrease < 1e-10) converged = true;
      } else {
        lambda *= 10.0;
        if (++consecutive_failures >= 20) {
          converged = true;
          break;
        }
      }
    }
  }

  result.iterations = iterations;
  try {
    const Homography refined(problem.to_pixel(p));
    const double refined_cost = reprojection_cost(refined, inliers);
    if (refined_cost <= initial_cost) {
      result.homography = refined;
      result.final_cost = refined_cost;
    }
  } catch (const Error&) {
    // Fall back to the input model.
  }
  return result;
}

Mat3 calibrate_homography(const Mat3& h, const Intrinsics& k) {
  if (!k.valid()) fail(ErrorCode::InvalidArgument, "intrinsics need positive focal lengths");
  const Mat3 km = k.matrix();
  return km * h * km.inverse();
}

SVD3 svd3(const Mat3& m) {
  // One-sided Jacobi: rotate columns of A = M V until they are mutually
  // orthogonal, then A = U diag(sigma).
  Mat3 a = m;
  Mat3 v = Mat3::Identity();
  constexpr double kEps = 1e-15;
  static constexpr int kPairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (int sweep = 0; sweep < 100; ++sweep) {
    bool rotated = false;
    for (const auto& pq : kPairs) {
      const int p = pq[0], q = pq[1];
      const double alpha = a.col(p).squaredNorm();
      const double beta = a.col(q).squaredNorm();
      const double gamma = a.col(p).dot(a.col(q));
      if (gamma == 0.0 || std::abs(gamma) <= kEps * std::sqrt(alpha * beta)) continue;
      rotated = true;
      const double zeta = (beta - alpha) / (2.0 * gamma);
      const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double s = c * t;
      const Eigen::Vector3d ap = a.col(p), aq = a.col(q);
      a.col(p) = c * ap - s * aq;
      a.col(q) = s * ap + c * aq;
      const Eigen::Vector3d vp = v.col(p), vq = v.col(q);
      v.col(p) = c * vp - s * vq;
      v.col(q) = s * vp + c * vq;
    }
    if (!rotated) break;
  }

  std::array<int, 3> order = {0, 1, 2};
  Eigen::Vector3d norms(a.col(0).norm(), a.col(1).norm(), a.col(2).norm());
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return norms(i) > norms(j); });

  SVD3 out;
  for (int k = 0; k < 3; ++k) {
    out.sigma(k) = norms(order[static_cast<std::size_t>(k)]);
    out.V.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  // Left vectors by modified Gram-Schmidt in descending sigma order; columns
  // of (numerically) zero singular values are completed from the standard basis.
  for (int k = 0; k < 3; ++k) {
    Eigen::Vector3d u = Eigen::Vector3d::Zero();
    const double sigma = out.sigma(k);
    if (sigma > 0.0 && sigma > 1e-300) u = a.col(order[static_cast<std::size_t>(k)]) / sigma;
    for (int j = 0; j < k; ++j) u -= out.U.col(j).dot(u) * out.U.col(j);
    if (u.norm() < 0.5) {
      double best_norm = -1.0;
      for (int e = 0; e < 3; ++e) {
        Eigen::Vector3d cand = Eigen::Vector3d::Unit(e);
        for (int j = 0; j < k; ++j) cand -= out.U.col(j).dot(cand) * out.U.col(j);
        if (cand.norm() > best_norm) {
          best_norm = cand.norm();
          u = cand;
        }
      }
    }
    out.U.col(k) = u.normalized();
  }
  return out;
}

}  // namespace egopano
