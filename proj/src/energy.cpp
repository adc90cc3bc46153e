#include "crossreg/energy.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace crossreg {

void EnergyConfig::validate() const {
    if (lcc_radius < 1) throw ParameterError("lcc_radius must be >= 1");
    if (down_factor < 1) throw ParameterError("down_factor must be >= 1");
    if (std::abs(w_sim) + std::abs(w_smooth) == 0.0) {
        throw ParameterError("objective is identically zero: w_sim and w_smooth both vanish");
    }
    for (double w : {w_sim, w_sim_down, w_smooth, w_smooth_down}) {
        if (!std::isfinite(w)) throw ParameterError("energy weights must be finite");
    }
}

namespace {

// Per-voxel variance below this is treated as a flat window.
constexpr double kVarFloor = 1e-9;

struct ScalarGrid {
    Dims3 d;
    std::vector<double> v;
};

ScalarGrid from_volume(const Volume& vol) {
    ScalarGrid g{vol.dims(), std::vector<double>(vol.size())};
    for (std::size_t i = 0; i < vol.size(); ++i) g.v[i] = vol[i];
    return g;
}

// In-place clipped box sum along one axis (window half-width r).
void box_sum_axis(std::vector<double>& data, const Dims3& d, int axis, int r,
                  std::vector<double>& prefix) {
    const int n = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
    const std::size_t stride = axis == 0 ? 1
                               : axis == 1 ? static_cast<std::size_t>(d.nx)
                                           : static_cast<std::size_t>(d.nx) * d.ny;
    const int an = axis == 0 ? d.ny : d.nx;
    const int bn = axis == 2 ? d.ny : d.nz;
    prefix.resize(static_cast<std::size_t>(n) + 1);
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
            prefix[0] = 0.0;
            for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + data[base + i * stride];
            for (int i = 0; i < n; ++i) {
                const int lo = std::max(i - r, 0);
                const int hi = std::min(i + r, n - 1);
                data[base + i * stride] = prefix[hi + 1] - prefix[lo];
            }
        }
    }
}

void box_sum(std::vector<double>& data, const Dims3& d, int r) {
    std::vector<double> prefix;
    for (int axis = 0; axis < 3; ++axis) box_sum_axis(data, d, axis, r, prefix);
}

// Number of voxels in the clipped window centred at each position of one axis.
std::vector<double> axis_counts(int n, int r) {
    std::vector<double> c(n);
    for (int i = 0; i < n; ++i) {
        c[i] = std::min(i + r, n - 1) - std::max(i - r, 0) + 1;
    }
    return c;
}

// Value of the squared-LCC loss between grids a and b; when grad_b is given,
// also accumulates dLoss/db into it (same length as b).
double lcc_loss_impl(const ScalarGrid& a, const ScalarGrid& b, int radius,
                     std::vector<double>* grad_b) {
    const Dims3& d = a.d;
    const std::size_t n = a.v.size();
    std::vector<double> Sa = a.v, Sb = b.v, Saa(n), Sbb(n), Sab(n);
    for (std::size_t i = 0; i < n; ++i) {
        Saa[i] = a.v[i] * a.v[i];
        Sbb[i] = b.v[i] * b.v[i];
        Sab[i] = a.v[i] * b.v[i];
    }
    box_sum(Sa, d, radius);
    box_sum(Sb, d, radius);
    box_sum(Saa, d, radius);
    box_sum(Sbb, d, radius);
    box_sum(Sab, d, radius);
    const auto cx = axis_counts(d.nx, radius);
    const auto cy = axis_counts(d.ny, radius);
    const auto cz = axis_counts(d.nz, radius);

    // Per-window coefficients reused by the scatter pass of the gradient.
    std::vector<double> c1, c1mua, c2, c2mub;
    if (grad_b) {
        c1.assign(n, 0.0);
        c1mua.assign(n, 0.0);
        c2.assign(n, 0.0);
        c2mub.assign(n, 0.0);
    }

    double acc = 0.0;
    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            const double cyz = cy[y] * cz[z];
            for (int x = 0; x < d.nx; ++x, ++i) {
                const double cnt = cx[x] * cyz;
                const double cross = Sab[i] - Sa[i] * Sb[i] / cnt;
                const double va = Saa[i] - Sa[i] * Sa[i] / cnt;
                const double vb = Sbb[i] - Sb[i] * Sb[i] / cnt;
                if (va <= kVarFloor * cnt || vb <= kVarFloor * cnt) continue;
                const double inv = 1.0 / (va * vb);
                acc += cross * cross * inv;
                if (grad_b) {
                    c1[i] = 2.0 * cross * inv;
                    c1mua[i] = c1[i] * (Sa[i] / cnt);
                    c2[i] = 2.0 * cross * cross * inv / vb;
                    c2mub[i] = c2[i] * (Sb[i] / cnt);
                }
            }
        }
    }
    const double norm = static_cast<double>(n);
    if (grad_b) {
        // Window membership is symmetric, so the sum over windows containing a
        // voxel is another box sum of the per-window coefficients.
        box_sum(c1, d, radius);
        box_sum(c1mua, d, radius);
        box_sum(c2, d, radius);
        box_sum(c2mub, d, radius);
        for (std::size_t k = 0; k < n; ++k) {
            (*grad_b)[k] =
                -(a.v[k] * c1[k] - c1mua[k] - b.v[k] * c2[k] + c2mub[k]) / norm;
        }
    }
    return -acc / norm;
}

// Warp a grid through a field; optionally keep the spatial gradient of the
// interpolant at each sample point for the chain rule.
ScalarGrid warp_grid(const Volume& moving, const DisplacementField& field,
                     std::vector<std::array<double, 3>>* sgrad) {
    const Dims3& d = field.dims();
    ScalarGrid out{d, std::vector<double>(d.count())};
    if (sgrad) sgrad->assign(d.count(), {0.0, 0.0, 0.0});
    std::array<double, 3> g;
    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x, ++i) {
                out.v[i] = sample_trilinear_grad(moving, x + field.u(i, 0), y + field.u(i, 1),
                                                 z + field.u(i, 2), g);
                if (sgrad) (*sgrad)[i] = g;
            }
        }
    }
    return out;
}

double smoothness_impl(const DisplacementField& f, DisplacementField* grad) {
    const Dims3& d = f.dims();
    if (d.nx < 2 || d.ny < 2 || d.nz < 2) {
        throw ShapeError("smoothness needs at least 2 voxels per axis, got " + to_string(d));
    }
    const double norm = 3.0 * static_cast<double>(d.count());
    double acc = 0.0;
    auto add_pair = [&](std::size_t q1, std::size_t q2, int c) {
        const double t = f.u(q2, c) - f.u(q1, c);
        acc += t * t;
        if (grad) {
            grad->u(q2, c) += 2.0 * t / norm;
            grad->u(q1, c) -= 2.0 * t / norm;
        }
    };
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x) {
                const std::size_t i = d.index(x, y, z);
                // forward difference per axis; the far boundary voxel reuses
                // the last interval (one-sided stencil)
                const std::size_t ix = x < d.nx - 1 ? d.index(x + 1, y, z) : i;
                const std::size_t jx = x < d.nx - 1 ? i : d.index(x - 1, y, z);
                const std::size_t iy = y < d.ny - 1 ? d.index(x, y + 1, z) : i;
                const std::size_t jy = y < d.ny - 1 ? i : d.index(x, y - 1, z);
                const std::size_t iz = z < d.nz - 1 ? d.index(x, y, z + 1) : i;
                const std::size_t jz = z < d.nz - 1 ? i : d.index(x, y, z - 1);
                for (int c = 0; c < 3; ++c) {
                    add_pair(jx, ix, c);
                    add_pair(jy, iy, c);
                    add_pair(jz, iz, c);
                }
            }
        }
    }
    return acc / norm;
}

DisplacementField restrict_adjoint(const DisplacementField& coarse_grad, const Dims3& fine,
                                   int factor) {
    DisplacementField out(fine);
    if (factor == 1) {
        out = coarse_grad;
        return out;
    }
    const Dims3& cd = coarse_grad.dims();
    // Block sizes (edge blocks may be partial).
    auto block_len = [&](int fine_n, int ci) {
        const int lo = ci * factor;
        const int hi = std::min(lo + factor, fine_n);
        return hi - lo;
    };
    std::size_t i = 0;
    for (int z = 0; z < fine.nz; ++z) {
        const int cz = z / factor;
        for (int y = 0; y < fine.ny; ++y) {
            const int cy = y / factor;
            for (int x = 0; x < fine.nx; ++x, ++i) {
                const int cx = x / factor;
                const double cnt = static_cast<double>(block_len(fine.nx, cx)) *
                                   block_len(fine.ny, cy) * block_len(fine.nz, cz);
                const std::size_t ci = cd.index(cx, cy, cz);
                for (int c = 0; c < 3; ++c) {
                    out.u(i, c) = coarse_grad.u(ci, c) / (cnt * factor);
                }
            }
        }
    }
    return out;
}

void check_shapes(const Volume& fixed, const Volume& moving, const DisplacementField& phi_fwd,
                  const DisplacementField& phi_bwd) {
    if (fixed.dims() != moving.dims() || fixed.dims() != phi_fwd.dims() ||
        fixed.dims() != phi_bwd.dims()) {
        throw ShapeError("total_loss operands must share one grid: fixed " +
                         to_string(fixed.dims()) + ", moving " + to_string(moving.dims()) +
                         ", phi_fwd " + to_string(phi_fwd.dims()) + ", phi_bwd " +
                         to_string(phi_bwd.dims()));
    }
}

// One similarity direction: value of lcc(target, warp(source, phi)) and, if
// grad != nullptr, its derivative with respect to phi.
double sim_direction(const Volume& target, const Volume& source, const DisplacementField& phi,
                     int radius, DisplacementField* grad) {
    std::vector<std::array<double, 3>> sgrad;
    const ScalarGrid tgt = from_volume(target);
    const ScalarGrid warped = warp_grid(source, phi, grad ? &sgrad : nullptr);
    if (!grad) {
        return lcc_loss_impl(tgt, warped, radius, nullptr);
    }
    std::vector<double> dLdW(warped.v.size());
    const double value = lcc_loss_impl(tgt, warped, radius, &dLdW);
    for (std::size_t i = 0; i < dLdW.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            grad->u(i, c) = dLdW[i] * sgrad[i][c];
        }
    }
    return value;
}

void axpy(DisplacementField& y, double alpha, const DisplacementField& x) {
    for (std::size_t i = 0; i < y.raw().size(); ++i) y.raw()[i] += alpha * x.raw()[i];
}

bool smoothable(const Dims3& d) { return d.nx >= 2 && d.ny >= 2 && d.nz >= 2; }

}  // namespace

double lcc_similarity_loss(const Volume& a, const Volume& b, int radius) {
    if (a.dims() != b.dims()) {
        throw ShapeError("lcc operands differ: " + to_string(a.dims()) + " vs " +
                         to_string(b.dims()));
    }
    if (radius < 1) throw ParameterError("lcc radius must be >= 1");
    return lcc_loss_impl(from_volume(a), from_volume(b), radius, nullptr);
}

double smoothness_loss(const DisplacementField& field) {
    return smoothness_impl(field, nullptr);
}

LossTerms total_loss(const Volume& fixed, const Volume& moving, const DisplacementField& phi_fwd,
                     const DisplacementField& phi_bwd, const EnergyConfig& cfg) {
    cfg.validate();
    check_shapes(fixed, moving, phi_fwd, phi_bwd);
    LossTerms t;
    t.sim = sim_direction(fixed, moving, phi_fwd, cfg.lcc_radius, nullptr) +
            sim_direction(moving, fixed, phi_bwd, cfg.lcc_radius, nullptr);
    const Volume fixed_d = downsample_mean(fixed, cfg.down_factor);
    const Volume moving_d = downsample_mean(moving, cfg.down_factor);
    const DisplacementField fwd_d = restrict_field(phi_fwd, cfg.down_factor);
    const DisplacementField bwd_d = restrict_field(phi_bwd, cfg.down_factor);
    t.sim_down = sim_direction(fixed_d, moving_d, fwd_d, cfg.lcc_radius, nullptr) +
                 sim_direction(moving_d, fixed_d, bwd_d, cfg.lcc_radius, nullptr);
    t.smooth = smoothness_loss(phi_fwd) + smoothness_loss(phi_bwd);
    t.smooth_down = smoothable(fwd_d.dims())
                        ? smoothness_loss(fwd_d) + smoothness_loss(bwd_d)
                        : 0.0;  // coarse grid collapsed to a single slab
    t.total = cfg.w_sim * t.sim + cfg.w_sim_down * t.sim_down + cfg.w_smooth * t.smooth +
              cfg.w_smooth_down * t.smooth_down;
    return t;
}

std::pair<DisplacementField, DisplacementField> total_loss_gradient(
    const Volume& fixed, const Volume& moving, const DisplacementField& phi_fwd,
    const DisplacementField& phi_bwd, const EnergyConfig& cfg, LossTerms* terms) {
    cfg.validate();
    check_shapes(fixed, moving, phi_fwd, phi_bwd);
    const Dims3& d = fixed.dims();
    DisplacementField gf(d), gb(d);
    LossTerms t;

    DisplacementField part(d);
    t.sim = sim_direction(fixed, moving, phi_fwd, cfg.lcc_radius, &part);
    axpy(gf, cfg.w_sim, part);
    t.sim += sim_direction(moving, fixed, phi_bwd, cfg.lcc_radius, &part);
    axpy(gb, cfg.w_sim, part);

    const Volume fixed_d = downsample_mean(fixed, cfg.down_factor);
    const Volume moving_d = downsample_mean(moving, cfg.down_factor);
    const DisplacementField fwd_d = restrict_field(phi_fwd, cfg.down_factor);
    const DisplacementField bwd_d = restrict_field(phi_bwd, cfg.down_factor);
    DisplacementField part_d(fwd_d.dims());
    t.sim_down = sim_direction(fixed_d, moving_d, fwd_d, cfg.lcc_radius, &part_d);
    axpy(gf, cfg.w_sim_down, restrict_adjoint(part_d, d, cfg.down_factor));
    t.sim_down += sim_direction(moving_d, fixed_d, bwd_d, cfg.lcc_radius, &part_d);
    axpy(gb, cfg.w_sim_down, restrict_adjoint(part_d, d, cfg.down_factor));

    DisplacementField sg(d);
    t.smooth = smoothness_impl(phi_fwd, &sg);
    axpy(gf, cfg.w_smooth, sg);
    sg.fill(0, 0, 0);
    t.smooth += smoothness_impl(phi_bwd, &sg);
    axpy(gb, cfg.w_smooth, sg);

    if (smoothable(fwd_d.dims())) {
        DisplacementField sgd(fwd_d.dims());
        t.smooth_down = smoothness_impl(fwd_d, &sgd);
        axpy(gf, cfg.w_smooth_down, restrict_adjoint(sgd, d, cfg.down_factor));
        sgd.fill(0, 0, 0);
        t.smooth_down += smoothness_impl(bwd_d, &sgd);
        axpy(gb, cfg.w_smooth_down, restrict_adjoint(sgd, d, cfg.down_factor));
    }

    t.total = cfg.w_sim * t.sim + cfg.w_sim_down * t.sim_down + cfg.w_smooth * t.smooth +
              cfg.w_smooth_down * t.smooth_down;
    if (terms) *terms = t;
    return {std::move(gf), std::move(gb)};
}

}  // namespace crossreg
