#pragma once

#include <array>
#include <vector>

#include "crossreg/volume.hpp"

namespace crossreg {

// Dense per-voxel displacement field u in voxel units of the target grid.
// The deformed position of voxel p is p + u(p). Components are stored
// interleaved (x, y, z) per voxel, double precision.
class DisplacementField {
  public:
    DisplacementField() = default;
    explicit DisplacementField(Dims3 dims);
    DisplacementField(Dims3 dims, std::vector<double> vectors);

    const Dims3& dims() const { return dims_; }
    std::size_t voxel_count() const { return dims_.count(); }

    double& u(std::size_t voxel, int comp) { return vec_[3 * voxel + comp]; }
    double u(std::size_t voxel, int comp) const { return vec_[3 * voxel + comp]; }
    double& u(int x, int y, int z, int comp) { return vec_[3 * dims_.index(x, y, z) + comp]; }
    double u(int x, int y, int z, int comp) const { return vec_[3 * dims_.index(x, y, z) + comp]; }

    const std::vector<double>& raw() const { return vec_; }
    std::vector<double>& raw() { return vec_; }

    void fill(double vx, double vy, double vz);
    double max_magnitude() const;
    double mean_magnitude() const;
    void validate_finite() const;

  private:
    Dims3 dims_;
    std::vector<double> vec_;
};

// Trilinear interpolation of a volume at a voxel-space point; points outside
// [0, n-1]^3 read as zero. Throws ParameterError on non-finite coordinates.
double sample_trilinear(const Volume& vol, const std::array<double, 3>& point);

// Same, also returning the spatial derivative of the interpolant w.r.t. the
// point (one-sided at cell boundaries, zero outside the domain).
double sample_trilinear_grad(const Volume& vol, double x, double y, double z,
                             std::array<double, 3>& grad);

// Resample `moving` through the field: out(p) = moving(p + u(p)), trilinear.
Volume warp_image(const Volume& moving, const DisplacementField& field);

// Nearest-neighbour warp of a binary mask; output stays binary.
LabelMask warp_label(const LabelMask& mask, const DisplacementField& field);

// Per-voxel determinant of the Jacobian of p -> p + u(p), central differences
// inside, one-sided at the boundary. Requires at least 2 voxels per axis.
Volume jacobian_determinant(const DisplacementField& field);

// Fraction of voxels with strictly positive Jacobian determinant.
double jacobian_positive_fraction(const DisplacementField& field);

// result(p) = inner(p) + outer(p + inner(p)); the outer field is sampled
// componentwise with trilinear interpolation (zero outside the domain).
DisplacementField compose_fields(const DisplacementField& outer, const DisplacementField& inner);

// Block-average coarsening: vectors are averaged over factor^3 blocks (edge
// blocks may be partial) and divided by the factor to stay in coarse voxel units.
DisplacementField restrict_field(const DisplacementField& field, int factor);

// Trilinear upsampling to `target` dims (corner-aligned) with components
// multiplied by the per-axis extent ratio.
DisplacementField prolong_field(const DisplacementField& field, const Dims3& target);

// Componentwise Gaussian smoothing (truncated at 3 sigma, edge-clamped).
// sigma <= 0 returns the field unchanged.
DisplacementField gaussian_smooth_field(const DisplacementField& field, double sigma);

// Mean Euclidean distance between corresponding vectors of two fields.
double mean_endpoint_error(const DisplacementField& a, const DisplacementField& b);

}  // namespace crossreg
