#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace mpccq {

struct SetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PointNotInSet : SetError {
  using SetError::SetError;
};

/// One polyhedral piece of a limiting normal cone: the conic hull of `rays`
/// plus the span of `lineality` (columns).
struct ConeChart {
  Eigen::MatrixXd rays;       // dim x r
  Eigen::MatrixXd lineality;  // dim x l
  std::string tag;

  /// Unit generators: rays plus both signs of each lineality basis vector.
  std::vector<Eigen::VectorXd> generators() const;
};

struct NormalConeDescription {
  int dim = 0;
  std::vector<ConeChart> charts;
};

/// Distance from v to the chart cone (nonnegative ray combination plus
/// lineality), exact via active-set nonnegative least squares.
double chart_distance(const ConeChart& chart, const Eigen::VectorXd& v);
/// Nearest chart point to v.
Eigen::VectorXd chart_project(const ConeChart& chart, const Eigen::VectorXd& v);

/// True iff v lies within tol (scaled by max(1, |v|)) of some chart.
bool normal_cone_membership(const NormalConeDescription& cone, const Eigen::VectorXd& v,
                            double tol);
double normal_cone_distance(const NormalConeDescription& cone, const Eigen::VectorXd& v);

struct FullSpace {
  int dim = 1;
};
struct Box {
  Eigen::VectorXd lo, hi;  // +-infinity allowed
};
struct Polyhedron {
  Eigen::MatrixXd A;  // A z <= b
  Eigen::VectorXd b;
};
struct PolyUnion {
  std::vector<Polyhedron> members;
};
struct Segment {
  Eigen::VectorXd p0, p1;
};
/// The sawtooth graph over [-1,1]: triangle edges with apexes at height one
/// between consecutive dyadic points, together with the base segment, mirrored
/// about the vertical axis. Structure below scale 2^-24 is truncated.
struct SawtoothGraph {};

class CatalogSet {
 public:
  using Variant = std::variant<FullSpace, Box, Polyhedron, PolyUnion, Segment, SawtoothGraph>;

  explicit CatalogSet(Variant v);

  int dim() const;
  bool contains(const Eigen::VectorXd& z, double tol) const;
  Eigen::VectorXd project(const Eigen::VectorXd& z) const;
  /// Exact chart description of the limiting normal cone at z in the set.
  NormalConeDescription normal_cone(const Eigen::VectorXd& z, double tol) const;
  /// Polyhedron or finite union of polyhedra (boxes, segments included).
  bool is_polyhedral() const;
  /// Clarke regular at every point (false for the sawtooth graph).
  bool is_everywhere_regular() const;

  const Variant& variant() const { return v_; }

 private:
  Variant v_;
};

int sawtooth_depth();

}  // namespace mpccq
