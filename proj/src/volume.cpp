#include "crossreg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace crossreg {

std::string to_string(const Dims3& d) {
    std::ostringstream os;
    os << "(" << d.nx << ", " << d.ny << ", " << d.nz << ")";
    return os.str();
}

namespace {

void check_dims(const Dims3& d) {
    if (d.nx < 1 || d.ny < 1 || d.nz < 1) {
        throw ParameterError("grid extents must be positive, got " + to_string(d));
    }
}

void check_spacing(const std::array<double, 3>& s) {
    for (double v : s) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ParameterError("voxel spacing must be positive and finite");
        }
    }
}

}  // namespace

Volume::Volume(Dims3 dims, std::array<double, 3> spacing, std::array<double, 3> origin)
    : dims_(dims), spacing_(spacing), origin_(origin) {
    check_dims(dims_);
    check_spacing(spacing_);
    data_.assign(dims_.count(), 0.0f);
}

Volume::Volume(Dims3 dims, std::vector<float> data, std::array<double, 3> spacing,
               std::array<double, 3> origin)
    : dims_(dims), spacing_(spacing), origin_(origin), data_(std::move(data)) {
    check_dims(dims_);
    check_spacing(spacing_);
    if (data_.size() != dims_.count()) {
        throw ShapeError("data length does not match grid extents " + to_string(dims_));
    }
}

void Volume::set_spacing(const std::array<double, 3>& s) {
    check_spacing(s);
    spacing_ = s;
}

void Volume::validate_finite() const {
    for (float v : data_) {
        if (!std::isfinite(v)) {
            throw ParameterError("volume contains non-finite values");
        }
    }
}

LabelMask::LabelMask(Dims3 dims, std::array<double, 3> spacing, std::array<double, 3> origin)
    : dims_(dims), spacing_(spacing), origin_(origin) {
    check_dims(dims_);
    check_spacing(spacing_);
    data_.assign(dims_.count(), 0);
}

LabelMask::LabelMask(Dims3 dims, std::vector<std::uint8_t> data, std::array<double, 3> spacing,
                     std::array<double, 3> origin)
    : dims_(dims), spacing_(spacing), origin_(origin), data_(std::move(data)) {
    check_dims(dims_);
    check_spacing(spacing_);
    if (data_.size() != dims_.count()) {
        throw ShapeError("mask length does not match grid extents " + to_string(dims_));
    }
    for (std::uint8_t v : data_) {
        if (v > 1) {
            throw ParameterError("label mask values must be 0 or 1");
        }
    }
}

std::size_t LabelMask::positive_count() const {
    return static_cast<std::size_t>(
        std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

Volume window_level(const Volume& vol, double level, double window) {
    if (!(window > 0.0) || !std::isfinite(window) || !std::isfinite(level)) {
        throw ParameterError("window must be positive and finite");
    }
    Volume out(vol.dims(), vol.spacing(), vol.origin());
    const double lo = level - window / 2.0;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        double t = (static_cast<double>(vol[i]) - lo) / window;
        out[i] = static_cast<float>(std::clamp(t, 0.0, 1.0));
    }
    return out;
}

Volume minmax_normalize(const Volume& vol) {
    Volume out(vol.dims(), vol.spacing(), vol.origin());
    if (vol.size() == 0) return out;
    const auto [mn_it, mx_it] = std::minmax_element(vol.data().begin(), vol.data().end());
    const double mn = *mn_it, mx = *mx_it;
    if (mx == mn) {
        return out;  // already all zeros
    }
    const double inv = 1.0 / (mx - mn);
    for (std::size_t i = 0; i < vol.size(); ++i) {
        out[i] = static_cast<float>((static_cast<double>(vol[i]) - mn) * inv);
    }
    return out;
}

namespace {

// Trilinear interpolation in voxel coordinates with zero outside [0, n-1]^3.
// Shared by resampling here and by the warp operators in field.cpp.
double sample_zero_outside(const Volume& vol, double x, double y, double z) {
    const Dims3& d = vol.dims();
    if (x < 0.0 || y < 0.0 || z < 0.0 || x > d.nx - 1 || y > d.ny - 1 || z > d.nz - 1) {
        return 0.0;
    }
    int x0 = std::min(static_cast<int>(x), std::max(d.nx - 2, 0));
    int y0 = std::min(static_cast<int>(y), std::max(d.ny - 2, 0));
    int z0 = std::min(static_cast<int>(z), std::max(d.nz - 2, 0));
    const double fx = x - x0, fy = y - y0, fz = z - z0;
    const int x1 = std::min(x0 + 1, d.nx - 1);
    const int y1 = std::min(y0 + 1, d.ny - 1);
    const int z1 = std::min(z0 + 1, d.nz - 1);
    const double c000 = vol.at(x0, y0, z0), c100 = vol.at(x1, y0, z0);
    const double c010 = vol.at(x0, y1, z0), c110 = vol.at(x1, y1, z0);
    const double c001 = vol.at(x0, y0, z1), c101 = vol.at(x1, y0, z1);
    const double c011 = vol.at(x0, y1, z1), c111 = vol.at(x1, y1, z1);
    const double c00 = c000 * (1 - fx) + c100 * fx;
    const double c10 = c010 * (1 - fx) + c110 * fx;
    const double c01 = c001 * (1 - fx) + c101 * fx;
    const double c11 = c011 * (1 - fx) + c111 * fx;
    const double c0 = c00 * (1 - fy) + c10 * fy;
    const double c1 = c01 * (1 - fy) + c11 * fy;
    return c0 * (1 - fz) + c1 * fz;
}

}  // namespace

Volume resample_to_spacing(const Volume& vol, const std::array<double, 3>& target_spacing) {
    for (double s : target_spacing) {
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw ParameterError("target spacing must be positive and finite");
        }
    }
    if (target_spacing == vol.spacing()) {
        return vol;
    }
    const Dims3& od = vol.dims();
    Dims3 nd{
        std::max(1, static_cast<int>(std::lround(od.nx * vol.spacing()[0] / target_spacing[0]))),
        std::max(1, static_cast<int>(std::lround(od.ny * vol.spacing()[1] / target_spacing[1]))),
        std::max(1, static_cast<int>(std::lround(od.nz * vol.spacing()[2] / target_spacing[2])))};
    Volume out(nd, target_spacing, vol.origin());
    const double rx = target_spacing[0] / vol.spacing()[0];
    const double ry = target_spacing[1] / vol.spacing()[1];
    const double rz = target_spacing[2] / vol.spacing()[2];
    std::size_t i = 0;
    for (int z = 0; z < nd.nz; ++z) {
        for (int y = 0; y < nd.ny; ++y) {
            for (int x = 0; x < nd.nx; ++x, ++i) {
                out[i] = static_cast<float>(
                    sample_zero_outside(vol, x * rx, y * ry, z * rz));
            }
        }
    }
    return out;
}

Volume pad_to_dims(const Volume& vol, const Dims3& target) {
    const Dims3& od = vol.dims();
    if (target.nx < od.nx || target.ny < od.ny || target.nz < od.nz) {
        throw ParameterError("pad target " + to_string(target) + " smaller than " + to_string(od));
    }
    if (target == od) return vol;
    Volume out(target, vol.spacing(), vol.origin());
    for (int z = 0; z < od.nz; ++z) {
        for (int y = 0; y < od.ny; ++y) {
            for (int x = 0; x < od.nx; ++x) {
                out.at(x, y, z) = vol.at(x, y, z);
            }
        }
    }
    return out;
}

Volume downsample_mean(const Volume& vol, int factor) {
    if (factor < 1) {
        throw ParameterError("downsample factor must be >= 1");
    }
    if (factor == 1) return vol;
    const Dims3& od = vol.dims();
    Dims3 nd{(od.nx + factor - 1) / factor, (od.ny + factor - 1) / factor,
             (od.nz + factor - 1) / factor};
    std::array<double, 3> sp{vol.spacing()[0] * factor, vol.spacing()[1] * factor,
                             vol.spacing()[2] * factor};
    Volume out(nd, sp, vol.origin());
    for (int z = 0; z < nd.nz; ++z) {
        for (int y = 0; y < nd.ny; ++y) {
            for (int x = 0; x < nd.nx; ++x) {
                double sum = 0.0;
                int cnt = 0;
                for (int dz = 0; dz < factor; ++dz) {
                    const int sz = z * factor + dz;
                    if (sz >= od.nz) break;
                    for (int dy = 0; dy < factor; ++dy) {
                        const int sy = y * factor + dy;
                        if (sy >= od.ny) break;
                        for (int dx = 0; dx < factor; ++dx) {
                            const int sx = x * factor + dx;
                            if (sx >= od.nx) break;
                            sum += vol.at(sx, sy, sz);
                            ++cnt;
                        }
                    }
                }
                out.at(x, y, z) = static_cast<float>(sum / cnt);
            }
        }
    }
    return out;
}

}  // namespace crossreg
