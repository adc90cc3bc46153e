#include "crossreg/field.hpp"

#include <algorithm>
#include <cmath>

namespace crossreg {

DisplacementField::DisplacementField(Dims3 dims) : dims_(dims) {
    if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) {
        throw ParameterError("field extents must be positive, got " + to_string(dims));
    }
    vec_.assign(3 * dims_.count(), 0.0);
}

DisplacementField::DisplacementField(Dims3 dims, std::vector<double> vectors)
    : dims_(dims), vec_(std::move(vectors)) {
    if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) {
        throw ParameterError("field extents must be positive, got " + to_string(dims));
    }
    if (vec_.size() != 3 * dims_.count()) {
        throw ShapeError("vector count does not match grid extents " + to_string(dims));
    }
}

void DisplacementField::fill(double vx, double vy, double vz) {
    for (std::size_t i = 0; i < dims_.count(); ++i) {
        vec_[3 * i] = vx;
        vec_[3 * i + 1] = vy;
        vec_[3 * i + 2] = vz;
    }
}

double DisplacementField::max_magnitude() const {
    double best = 0.0;
    for (std::size_t i = 0; i < dims_.count(); ++i) {
        const double m = vec_[3 * i] * vec_[3 * i] + vec_[3 * i + 1] * vec_[3 * i + 1] +
                         vec_[3 * i + 2] * vec_[3 * i + 2];
        best = std::max(best, m);
    }
    return std::sqrt(best);
}

double DisplacementField::mean_magnitude() const {
    double sum = 0.0;
    for (std::size_t i = 0; i < dims_.count(); ++i) {
        sum += std::sqrt(vec_[3 * i] * vec_[3 * i] + vec_[3 * i + 1] * vec_[3 * i + 1] +
                         vec_[3 * i + 2] * vec_[3 * i + 2]);
    }
    return sum / static_cast<double>(dims_.count());
}

void DisplacementField::validate_finite() const {
    for (double v : vec_) {
        if (!std::isfinite(v)) {
            throw ParameterError("displacement field contains non-finite components");
        }
    }
}

double sample_trilinear(const Volume& vol, const std::array<double, 3>& point) {
    for (double c : point) {
        if (!std::isfinite(c)) {
            throw ParameterError("sample point must be finite");
        }
    }
    std::array<double, 3> ignored;
    return sample_trilinear_grad(vol, point[0], point[1], point[2], ignored);
}

double sample_trilinear_grad(const Volume& vol, double x, double y, double z,
                             std::array<double, 3>& grad) {
    const Dims3& d = vol.dims();
    grad = {0.0, 0.0, 0.0};
    if (x < 0.0 || y < 0.0 || z < 0.0 || x > d.nx - 1 || y > d.ny - 1 || z > d.nz - 1) {
        return 0.0;
    }
    const int x0 = std::min(static_cast<int>(x), std::max(d.nx - 2, 0));
    const int y0 = std::min(static_cast<int>(y), std::max(d.ny - 2, 0));
    const int z0 = std::min(static_cast<int>(z), std::max(d.nz - 2, 0));
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
    grad[0] = ((c100 - c000) * (1 - fy) + (c110 - c010) * fy) * (1 - fz) +
              ((c101 - c001) * (1 - fy) + (c111 - c011) * fy) * fz;
    grad[1] = (c10 - c00) * (1 - fz) + (c11 - c01) * fz;
    grad[2] = c1 - c0;
    return c0 * (1 - fz) + c1 * fz;
}

Volume warp_image(const Volume& moving, const DisplacementField& field) {
    if (field.dims() != moving.dims()) {
        // The field defines the output grid; the moving image may differ in
        // extents only when the caller resampled one of them, which the
        // pipeline rules out. Require equality to catch mistakes early.
        throw ShapeError("field extents " + to_string(field.dims()) +
                         " do not match moving image extents " + to_string(moving.dims()));
    }
    const Dims3& d = field.dims();
    Volume out(d, moving.spacing(), moving.origin());
    std::array<double, 3> g;
    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x, ++i) {
                out[i] = static_cast<float>(sample_trilinear_grad(
                    moving, x + field.u(i, 0), y + field.u(i, 1), z + field.u(i, 2), g));
            }
        }
    }
    return out;
}

LabelMask warp_label(const LabelMask& mask, const DisplacementField& field) {
    if (field.dims() != mask.dims()) {
        throw ShapeError("field extents " + to_string(field.dims()) +
                         " do not match mask extents " + to_string(mask.dims()));
    }
    const Dims3& d = field.dims();
    LabelMask out(d, mask.spacing(), mask.origin());
    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x, ++i) {
                const long sx = std::lround(x + field.u(i, 0));
                const long sy = std::lround(y + field.u(i, 1));
                const long sz = std::lround(z + field.u(i, 2));
                if (sx >= 0 && sx < d.nx && sy >= 0 && sy < d.ny && sz >= 0 && sz < d.nz) {
                    out[i] = mask.at(static_cast<int>(sx), static_cast<int>(sy),
                                     static_cast<int>(sz));
                }
            }
        }
    }
    return out;
}

namespace {

// Derivative of component `comp` along axis `axis`: central differences in
// the interior, one-sided at the two boundary slices.
inline double field_derivative(const DisplacementField& f, int x, int y, int z, int comp,
                               int axis) {
    const Dims3& d = f.dims();
    const int n = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
    int c = axis == 0 ? x : axis == 1 ? y : z;
    int lo = c > 0 ? c - 1 : c;
    int hi = c < n - 1 ? c + 1 : c;
    const double denom = hi - lo;
    auto at = [&](int v) {
        int xx = x, yy = y, zz = z;
        (axis == 0 ? xx : axis == 1 ? yy : zz) = v;
        return f.u(xx, yy, zz, comp);
    };
    return (at(hi) - at(lo)) / denom;
}

}  // namespace

Volume jacobian_determinant(const DisplacementField& field) {
    const Dims3& d = field.dims();
    if (d.nx < 2 || d.ny < 2 || d.nz < 2) {
        throw ShapeError("Jacobian needs at least 2 voxels per axis, got " + to_string(d));
    }
    Volume out(d);
    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x, ++i) {
                double J[3][3];
                for (int comp = 0; comp < 3; ++comp) {
                    for (int axis = 0; axis < 3; ++axis) {
                        J[comp][axis] = field_derivative(field, x, y, z, comp, axis) +
                                        (comp == axis ? 1.0 : 0.0);
                    }
                }
                const double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                                   J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                                   J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
                out[i] = static_cast<float>(det);
            }
        }
    }
    return out;
}

double jacobian_positive_fraction(const DisplacementField& field) {
    const Volume det = jacobian_determinant(field);
    std::size_t pos = 0;
    for (float v : det.data()) {
        if (v > 0.0f) ++pos;
    }
    return static_cast<double>(pos) / static_cast<double>(det.size());
}

namespace {

// Componentwise trilinear sample of a field at a voxel-space point, zero
// outside the domain. Optionally returns the 3x3 Jacobian d(sample_i)/d(x_j).
void sample_field(const DisplacementField& f, double x, double y, double z,
                  std::array<double, 3>& value, double jac[3][3]) {
    const Dims3& d = f.dims();
    value = {0.0, 0.0, 0.0};
    if (jac) {
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) jac[a][b] = 0.0;
    }
    if (x < 0.0 || y < 0.0 || z < 0.0 || x > d.nx - 1 || y > d.ny - 1 || z > d.nz - 1) {
        return;
    }
    const int x0 = std::min(static_cast<int>(x), std::max(d.nx - 2, 0));
    const int y0 = std::min(static_cast<int>(y), std::max(d.ny - 2, 0));
    const int z0 = std::min(static_cast<int>(z), std::max(d.nz - 2, 0));
    const double fx = x - x0, fy = y - y0, fz = z - z0;
    const int x1 = std::min(x0 + 1, d.nx - 1);
    const int y1 = std::min(y0 + 1, d.ny - 1);
    const int z1 = std::min(z0 + 1, d.nz - 1);
    for (int comp = 0; comp < 3; ++comp) {
        const double c000 = f.u(x0, y0, z0, comp), c100 = f.u(x1, y0, z0, comp);
        const double c010 = f.u(x0, y1, z0, comp), c110 = f.u(x1, y1, z0, comp);
        const double c001 = f.u(x0, y0, z1, comp), c101 = f.u(x1, y0, z1, comp);
        const double c011 = f.u(x0, y1, z1, comp), c111 = f.u(x1, y1, z1, comp);
        const double c00 = c000 * (1 - fx) + c100 * fx;
        const double c10 = c010 * (1 - fx) + c110 * fx;
        const double c01 = c001 * (1 - fx) + c101 * fx;
        const double c11 = c011 * (1 - fx) + c111 * fx;
        const double c0 = c00 * (1 - fy) + c10 * fy;
        const double c1 = c01 * (1 - fy) + c11 * fy;
        value[comp] = c0 * (1 - fz) + c1 * fz;
        if (jac) {
            jac[comp][0] = ((c100 - c000) * (1 - fy) + (c110 - c010) * fy) * (1 - fz) +
                           ((c101 - c001) * (1 - fy) + (c111 - c011) * fy) * fz;
            jac[comp][1] = (c10 - c00) * (1 - fz) + (c11 - c01) * fz;
            jac[comp][2] = c1 - c0;
        }
    }
}

}  // namespace

DisplacementField compose_fields(const DisplacementField& outer, const DisplacementField& inner) {
    if (outer.dims() != inner.dims()) {
        throw ShapeError("compose_fields extents mismatch: " + to_string(outer.dims()) + " vs " +
                         to_string(inner.dims()));
    }
    const Dims3& d = inner.dims();
    DisplacementField out(d);
    std::array<double, 3> s;
    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x, ++i) {
                sample_field(outer, x + inner.u(i, 0), y + inner.u(i, 1), z + inner.u(i, 2), s,
                             nullptr);
                out.u(i, 0) = inner.u(i, 0) + s[0];
                out.u(i, 1) = inner.u(i, 1) + s[1];
                out.u(i, 2) = inner.u(i, 2) + s[2];
            }
        }
    }
    return out;
}

DisplacementField restrict_field(const DisplacementField& field, int factor) {
    if (factor < 1) {
        throw ParameterError("restriction factor must be >= 1");
    }
    if (factor == 1) return field;
    const Dims3& od = field.dims();
    const Dims3 nd{(od.nx + factor - 1) / factor, (od.ny + factor - 1) / factor,
                   (od.nz + factor - 1) / factor};
    DisplacementField out(nd);
    std::size_t i = 0;
    for (int z = 0; z < nd.nz; ++z) {
        for (int y = 0; y < nd.ny; ++y) {
            for (int x = 0; x < nd.nx; ++x, ++i) {
                double sum[3] = {0, 0, 0};
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
                            for (int c = 0; c < 3; ++c) sum[c] += field.u(sx, sy, sz, c);
                            ++cnt;
                        }
                    }
                }
                for (int c = 0; c < 3; ++c) out.u(i, c) = sum[c] / (cnt * factor);
            }
        }
    }
    return out;
}

DisplacementField prolong_field(const DisplacementField& field, const Dims3& target) {
    const Dims3& od = field.dims();
    if (target.nx < od.nx || target.ny < od.ny || target.nz < od.nz) {
        throw ParameterError("prolongation target " + to_string(target) +
                             " smaller than source " + to_string(od));
    }
    DisplacementField out(target);
    const double sx = target.nx > 1 ? static_cast<double>(od.nx - 1) / (target.nx - 1) : 0.0;
    const double sy = target.ny > 1 ? static_cast<double>(od.ny - 1) / (target.ny - 1) : 0.0;
    const double sz = target.nz > 1 ? static_cast<double>(od.nz - 1) / (target.nz - 1) : 0.0;
    const double ratio[3] = {static_cast<double>(target.nx) / od.nx,
                             static_cast<double>(target.ny) / od.ny,
                             static_cast<double>(target.nz) / od.nz};
    std::array<double, 3> s;
    std::size_t i = 0;
    for (int z = 0; z < target.nz; ++z) {
        for (int y = 0; y < target.ny; ++y) {
            for (int x = 0; x < target.nx; ++x, ++i) {
                sample_field(field, x * sx, y * sy, z * sz, s, nullptr);
                for (int c = 0; c < 3; ++c) out.u(i, c) = s[c] * ratio[c];
            }
        }
    }
    return out;
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i / sigma) * (i / sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable 1-D convolution along `axis` with edge clamping.
void convolve_axis(std::vector<double>& data, const Dims3& d, int axis,
                   const std::vector<double>& kernel, std::vector<double>& scratch) {
    const int radius = static_cast<int>(kernel.size() / 2);
    const int n = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
    const std::size_t stride = axis == 0 ? 1
                               : axis == 1 ? static_cast<std::size_t>(d.nx)
                                           : static_cast<std::size_t>(d.nx) * d.ny;
    const int an = axis == 0 ? d.ny : d.nx;
    const int bn = axis == 2 ? d.ny : d.nz;
    scratch.resize(static_cast<std::size_t>(n) * 3);
    for (int b = 0; b < bn; ++b) {
        for (int a = 0; a < an; ++a) {
            std::size_t base;
            if (axis == 0) {
                base = d.index(0, a, b);
            } else if (axis == 1) {
                base = d.index(a, 0, b);
            } else {
                base = d.index(a, b, 0);
            }
            for (int i = 0; i < n; ++i) {
                for (int c = 0; c < 3; ++c) {
                    scratch[3 * i + c] = data[3 * (base + i * stride) + c];
                }
            }
            for (int i = 0; i < n; ++i) {
                double acc[3] = {0, 0, 0};
                for (int k = -radius; k <= radius; ++k) {
                    const int j = std::clamp(i + k, 0, n - 1);
                    const double w = kernel[k + radius];
                    for (int c = 0; c < 3; ++c) acc[c] += w * scratch[3 * j + c];
                }
                for (int c = 0; c < 3; ++c) data[3 * (base + i * stride) + c] = acc[c];
            }
        }
    }
}

}  // namespace

DisplacementField gaussian_smooth_field(const DisplacementField& field, double sigma) {
    if (sigma <= 0.0) return field;
    DisplacementField out = field;
    const std::vector<double> kernel = gaussian_kernel(sigma);
    std::vector<double> scratch;
    for (int axis = 0; axis < 3; ++axis) {
        convolve_axis(out.raw(), out.dims(), axis, kernel, scratch);
    }
    return out;
}

double mean_endpoint_error(const DisplacementField& a, const DisplacementField& b) {
    if (a.dims() != b.dims()) {
        throw ShapeError("endpoint error extents mismatch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.voxel_count(); ++i) {
        const double dx = a.u(i, 0) - b.u(i, 0);
        const double dy = a.u(i, 1) - b.u(i, 1);
        const double dz = a.u(i, 2) - b.u(i, 2);
        sum += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    return sum / static_cast<double>(a.voxel_count());
}

}  // namespace crossreg
