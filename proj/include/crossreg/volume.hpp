#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "crossreg/errors.hpp"

namespace crossreg {

// Integer grid extents. Voxel (x, y, z) maps to linear index x + nx*(y + ny*z),
// i.e. x is the fastest-varying axis.
struct Dims3 {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    bool operator==(const Dims3&) const = default;

    std::size_t count() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(nx) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * static_cast<std::size_t>(z));
    }
    bool contains(int x, int y, int z) const {
        return x >= 0 && x < nx && y >= 0 && y < ny && z >= 0 && z < nz;
    }
};

std::string to_string(const Dims3& d);

// A 3-D scalar grid with physical voxel spacing (mm) and origin (mm).
// Values are stored as float32; all arithmetic on them is done in double.
class Volume {
  public:
    Volume() = default;
    Volume(Dims3 dims, std::array<double, 3> spacing = {1.0, 1.0, 1.0},
           std::array<double, 3> origin = {0.0, 0.0, 0.0});
    Volume(Dims3 dims, std::vector<float> data,
           std::array<double, 3> spacing = {1.0, 1.0, 1.0},
           std::array<double, 3> origin = {0.0, 0.0, 0.0});

    const Dims3& dims() const { return dims_; }
    const std::array<double, 3>& spacing() const { return spacing_; }
    const std::array<double, 3>& origin() const { return origin_; }
    void set_spacing(const std::array<double, 3>& s);
    void set_origin(const std::array<double, 3>& o) { origin_ = o; }

    std::size_t size() const { return data_.size(); }
    float& at(int x, int y, int z) { return data_[dims_.index(x, y, z)]; }
    float at(int x, int y, int z) const { return data_[dims_.index(x, y, z)]; }
    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }
    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    // Throws ParameterError if any value is NaN/Inf.
    void validate_finite() const;

  private:
    Dims3 dims_;
    std::array<double, 3> spacing_{1.0, 1.0, 1.0};
    std::array<double, 3> origin_{0.0, 0.0, 0.0};
    std::vector<float> data_;
};

// A binary mask on the same kind of grid as Volume. Every value is 0 or 1.
class LabelMask {
  public:
    LabelMask() = default;
    LabelMask(Dims3 dims, std::array<double, 3> spacing = {1.0, 1.0, 1.0},
              std::array<double, 3> origin = {0.0, 0.0, 0.0});
    LabelMask(Dims3 dims, std::vector<std::uint8_t> data,
              std::array<double, 3> spacing = {1.0, 1.0, 1.0},
              std::array<double, 3> origin = {0.0, 0.0, 0.0});

    const Dims3& dims() const { return dims_; }
    const std::array<double, 3>& spacing() const { return spacing_; }
    const std::array<double, 3>& origin() const { return origin_; }
    void set_spacing(const std::array<double, 3>& s) { spacing_ = s; }
    void set_origin(const std::array<double, 3>& o) { origin_ = o; }

    std::size_t size() const { return data_.size(); }
    std::uint8_t& at(int x, int y, int z) { return data_[dims_.index(x, y, z)]; }
    std::uint8_t at(int x, int y, int z) const { return data_[dims_.index(x, y, z)]; }
    std::uint8_t& operator[](std::size_t i) { return data_[i]; }
    std::uint8_t operator[](std::size_t i) const { return data_[i]; }
    const std::vector<std::uint8_t>& data() const { return data_; }
    std::vector<std::uint8_t>& data() { return data_; }

    std::size_t positive_count() const;
    bool empty_mask() const { return positive_count() == 0; }

  private:
    Dims3 dims_;
    std::array<double, 3> spacing_{1.0, 1.0, 1.0};
    std::array<double, 3> origin_{0.0, 0.0, 0.0};
    std::vector<std::uint8_t> data_;
};

// Clamp-and-rescale intensity windowing: values in [level - window/2, level + window/2]
// map linearly onto [0, 1], values outside clamp to 0 or 1.
Volume window_level(const Volume& vol, double level, double window);

// (v - min) / (max - min); a constant volume maps to all zeros.
Volume minmax_normalize(const Volume& vol);

// Resample onto a grid with the given spacing. New extents are
// round(old_extent * old_spacing / new_spacing) per axis, at least 1.
// Values come from trilinear interpolation at the physical location of each
// new voxel; locations outside the old grid read as zero.
Volume resample_to_spacing(const Volume& vol, const std::array<double, 3>& target_spacing);

// Grow a volume to `target` dims by appending zero voxels at the high end of
// each axis. Spacing and origin are preserved.
Volume pad_to_dims(const Volume& vol, const Dims3& target);

// Block-average downsampling by an integer factor; edge blocks may be partial.
// Spacing is multiplied by the factor.
Volume downsample_mean(const Volume& vol, int factor);

}  // namespace crossreg
