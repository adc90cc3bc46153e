#include "crossreg/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace crossreg {

void SolverConfig::validate() const {
    if (n_levels < 1) throw ParameterError("n_levels must be >= 1");
    if (iters_per_level < 1) throw ParameterError("iters_per_level must be >= 1");
    if (!(step_size > 0.0)) throw ParameterError("step_size must be positive");
    if (!(step_shrink > 0.0 && step_shrink < 1.0)) {
        throw ParameterError("step_shrink must lie in (0, 1)");
    }
    if (!(converge_tol > 0.0)) throw ParameterError("converge_tol must be positive");
    if (cycle_weight < 0.0) throw ParameterError("cycle_weight must be nonnegative");
    if (fluid_sigma < 0.0) throw ParameterError("fluid_sigma must be nonnegative");
    energy.validate();
}

namespace {

struct CycleEval {
    double value = 0.0;
    DisplacementField grad_fwd;
    DisplacementField grad_bwd;
};

// Inverse-consistency value and (optionally) its gradient. The averaging
// region (forward-mapped position inside the grid) is treated as fixed when
// differentiating; it changes only on a null set of fields.
double cycle_impl(const DisplacementField& fwd, const DisplacementField& bwd,
                  DisplacementField* gf, DisplacementField* gb) {
    if (fwd.dims() != bwd.dims()) {
        throw ShapeError("inverse consistency extents mismatch: " + to_string(fwd.dims()) +
                         " vs " + to_string(bwd.dims()));
    }
    const Dims3& d = fwd.dims();
    double acc = 0.0;
    std::size_t inside = 0;
    struct Contribution {
        std::size_t voxel;
        double v[3];       // composed vector
        double jac[3][3];  // d(sampled bwd)/d(position)
        int x0, y0, z0;
        double fx, fy, fz;
    };
    std::vector<Contribution> contribs;
    if (gf) contribs.reserve(d.count());

    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x, ++i) {
                const double px = x + fwd.u(i, 0);
                const double py = y + fwd.u(i, 1);
                const double pz = z + fwd.u(i, 2);
                if (px < 0 || py < 0 || pz < 0 || px > d.nx - 1 || py > d.ny - 1 ||
                    pz > d.nz - 1) {
                    continue;
                }
                ++inside;
                const int x0 = std::min(static_cast<int>(px), std::max(d.nx - 2, 0));
                const int y0 = std::min(static_cast<int>(py), std::max(d.ny - 2, 0));
                const int z0 = std::min(static_cast<int>(pz), std::max(d.nz - 2, 0));
                const double fx = px - x0, fy = py - y0, fz = pz - z0;
                const int x1 = std::min(x0 + 1, d.nx - 1);
                const int y1 = std::min(y0 + 1, d.ny - 1);
                const int z1 = std::min(z0 + 1, d.nz - 1);
                Contribution cb{};
                cb.voxel = i;
                cb.x0 = x0;
                cb.y0 = y0;
                cb.z0 = z0;
                cb.fx = fx;
                cb.fy = fy;
                cb.fz = fz;
                for (int c = 0; c < 3; ++c) {
                    const double c000 = bwd.u(x0, y0, z0, c), c100 = bwd.u(x1, y0, z0, c);
                    const double c010 = bwd.u(x0, y1, z0, c), c110 = bwd.u(x1, y1, z0, c);
                    const double c001 = bwd.u(x0, y0, z1, c), c101 = bwd.u(x1, y0, z1, c);
                    const double c011 = bwd.u(x0, y1, z1, c), c111 = bwd.u(x1, y1, z1, c);
                    const double c00 = c000 * (1 - fx) + c100 * fx;
                    const double c10 = c010 * (1 - fx) + c110 * fx;
                    const double c01 = c001 * (1 - fx) + c101 * fx;
                    const double c11 = c011 * (1 - fx) + c111 * fx;
                    const double c0 = c00 * (1 - fy) + c10 * fy;
                    const double c1 = c01 * (1 - fy) + c11 * fy;
                    cb.v[c] = fwd.u(i, c) + c0 * (1 - fz) + c1 * fz;
                    cb.jac[c][0] = ((c100 - c000) * (1 - fy) + (c110 - c010) * fy) * (1 - fz) +
                                   ((c101 - c001) * (1 - fy) + (c111 - c011) * fy) * fz;
                    cb.jac[c][1] = (c10 - c00) * (1 - fz) + (c11 - c01) * fz;
                    cb.jac[c][2] = c1 - c0;
                }
                acc += cb.v[0] * cb.v[0] + cb.v[1] * cb.v[1] + cb.v[2] * cb.v[2];
                if (gf) contribs.push_back(cb);
            }
        }
    }
    if (inside == 0) return 0.0;
    const double norm = static_cast<double>(inside);
    if (gf) {
        *gf = DisplacementField(d);
        *gb = DisplacementField(d);
        for (const Contribution& cb : contribs) {
            // d icl / d fwd(p) = (2/N) * v^T (I + J)
            for (int c = 0; c < 3; ++c) {
                double s = cb.v[c];
                for (int k = 0; k < 3; ++k) s += cb.v[k] * cb.jac[k][c];
                gf->u(cb.voxel, c) += 2.0 * s / norm;
            }
            // d icl / d bwd(corner) = (2/N) * v_c * trilinear weight
            const int x1 = std::min(cb.x0 + 1, d.nx - 1);
            const int y1 = std::min(cb.y0 + 1, d.ny - 1);
            const int z1 = std::min(cb.z0 + 1, d.nz - 1);
            const double wx[2] = {1 - cb.fx, cb.fx};
            const double wy[2] = {1 - cb.fy, cb.fy};
            const double wz[2] = {1 - cb.fz, cb.fz};
            const int xs[2] = {cb.x0, x1}, ys[2] = {cb.y0, y1}, zs[2] = {cb.z0, z1};
            for (int dz = 0; dz < 2; ++dz) {
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const double w = wx[dx] * wy[dy] * wz[dz];
                        if (w == 0.0) continue;
                        const std::size_t ci = d.index(xs[dx], ys[dy], zs[dz]);
                        for (int c = 0; c < 3; ++c) {
                            gb->u(ci, c) += 2.0 * cb.v[c] * w / norm;
                        }
                    }
                }
            }
        }
    }
    return acc / norm;
}

// Clamp every mapped position p + u(p) into [0, n-1]^3. The energy is
// discontinuous where samples fall off the grid (they read as zero), so the
// solver keeps its iterates inside the region where the objective is
// continuous.
void project_inside(DisplacementField& f) {
    const Dims3& d = f.dims();
    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x, ++i) {
                f.u(i, 0) = std::clamp(x + f.u(i, 0), 0.0, double(d.nx - 1)) - x;
                f.u(i, 1) = std::clamp(y + f.u(i, 1), 0.0, double(d.ny - 1)) - y;
                f.u(i, 2) = std::clamp(z + f.u(i, 2), 0.0, double(d.nz - 1)) - z;
            }
        }
    }
}

double joint_max_magnitude(const DisplacementField& a, const DisplacementField& b) {
    return std::max(a.max_magnitude(), b.max_magnitude());
}

std::string trace_csv_row(const TraceRow& r) {
    std::ostringstream os;
    os << r.iteration << "," << r.level << "," << r.objective << "," << r.terms.sim << ","
       << r.terms.sim_down << "," << r.terms.smooth << "," << r.terms.smooth_down << ","
       << r.cycle;
    return os.str();
}

std::vector<std::string> trace_csv(const std::vector<TraceRow>& rows) {
    std::vector<std::string> out;
    out.reserve(rows.size() + 1);
    out.push_back("iteration,level,total,sim,sim_down,smooth,smooth_down,cycle");
    for (const TraceRow& r : rows) out.push_back(trace_csv_row(r));
    return out;
}

}  // namespace

double inverse_consistency_loss(const DisplacementField& phi_fwd,
                                const DisplacementField& phi_bwd) {
    return cycle_impl(phi_fwd, phi_bwd, nullptr, nullptr);
}

RegResult register_volumes(const Volume& fixed, const Volume& moving, const SolverConfig& cfg) {
    cfg.validate();
    if (fixed.dims() != moving.dims()) {
        throw ShapeError("registration inputs differ: fixed " + to_string(fixed.dims()) +
                         " vs moving " + to_string(moving.dims()));
    }
    fixed.validate_finite();
    moving.validate_finite();

    // Image pyramid by 2x block averaging; stop early rather than produce
    // slabs thinner than 4 voxels.
    std::vector<Volume> fpyr{fixed}, mpyr{moving};
    for (int l = 1; l < cfg.n_levels; ++l) {
        const Dims3& pd = fpyr.back().dims();
        if (std::min({pd.nx, pd.ny, pd.nz}) < 8) break;
        fpyr.push_back(downsample_mean(fpyr.back(), 2));
        mpyr.push_back(downsample_mean(mpyr.back(), 2));
    }

    RegResult result;
    const int levels = static_cast<int>(fpyr.size());
    DisplacementField phi_f(fpyr.back().dims());
    DisplacementField phi_b(fpyr.back().dims());

    auto objective = [&](const Volume& F, const Volume& M, const DisplacementField& uf,
                         const DisplacementField& ub, LossTerms& terms, double& cyc) {
        terms = total_loss(F, M, uf, ub, cfg.energy);
        cyc = cfg.cycle_weight > 0.0 ? inverse_consistency_loss(uf, ub) : 0.0;
        return terms.total + cfg.cycle_weight * cyc;
    };

    bool finest_converged = false;
    for (int li = levels - 1; li >= 0; --li) {
        const Volume& F = fpyr[li];
        const Volume& M = mpyr[li];

        LossTerms terms;
        double cyc = 0.0;
        double current = objective(F, M, phi_f, phi_b, terms, cyc);
        if (!std::isfinite(current)) {
            throw NumericalError("objective is non-finite at level entry",
                                 trace_csv(result.loss_trace));
        }
        result.loss_trace.push_back({li, 0, current, terms, cyc});

        // Update-direction smoothing scales tried per iteration, widest first.
        std::vector<double> sigmas;
        if (cfg.fluid_sigma > 0.0) {
            sigmas = {cfg.fluid_sigma, cfg.fluid_sigma / 2.0, 0.0};
        } else {
            sigmas = {0.0};
        }

        int small_streak = 0;
        bool stalled = false;
        for (int it = 1; it <= cfg.iters_per_level; ++it) {
            LossTerms gterms;
            auto [grad_f, grad_b] = total_loss_gradient(F, M, phi_f, phi_b, cfg.energy, &gterms);
            if (cfg.cycle_weight > 0.0) {
                DisplacementField cgf, cgb;
                cycle_impl(phi_f, phi_b, &cgf, &cgb);
                for (std::size_t k = 0; k < grad_f.raw().size(); ++k) {
                    grad_f.raw()[k] += cfg.cycle_weight * cgf.raw()[k];
                    grad_b.raw()[k] += cfg.cycle_weight * cgb.raw()[k];
                }
            }

            // Soft per-voxel normalization: strong (edge) voxels stop hogging
            // the step scale, so textureless regions keep moving instead of
            // waiting for smoothness diffusion alone.
            const double raw_max = joint_max_magnitude(grad_f, grad_b);
            if (raw_max > 0.0) {
                const double floor_mag = 0.1 * raw_max;
                for (DisplacementField* g : {&grad_f, &grad_b}) {
                    for (std::size_t k = 0; k < g->voxel_count(); ++k) {
                        const double m = std::sqrt(g->u(k, 0) * g->u(k, 0) +
                                                   g->u(k, 1) * g->u(k, 1) +
                                                   g->u(k, 2) * g->u(k, 2));
                        const double scale = 1.0 / (m + floor_mag);
                        g->u(k, 0) *= scale;
                        g->u(k, 1) *= scale;
                        g->u(k, 2) *= scale;
                    }
                }
            }

            bool accepted = false;
            double rel = 0.0;
            for (double sigma : sigmas) {
                DisplacementField dir_f = gaussian_smooth_field(grad_f, sigma);
                DisplacementField dir_b = gaussian_smooth_field(grad_b, sigma);
                const double gmax = joint_max_magnitude(dir_f, dir_b);
                if (gmax <= 0.0) continue;
                double s = cfg.step_size / gmax;
                for (int bt = 0; bt < 20; ++bt, s *= cfg.step_shrink) {
                    DisplacementField cand_f = phi_f;
                    DisplacementField cand_b = phi_b;
                    for (std::size_t k = 0; k < cand_f.raw().size(); ++k) {
                        cand_f.raw()[k] -= s * dir_f.raw()[k];
                        cand_b.raw()[k] -= s * dir_b.raw()[k];
                    }
                    project_inside(cand_f);
                    project_inside(cand_b);
                    LossTerms cterms;
                    double ccyc = 0.0;
                    const double cval = objective(F, M, cand_f, cand_b, cterms, ccyc);
                    if (!std::isfinite(cval)) {
                        throw NumericalError("objective became non-finite during line search",
                                             trace_csv(result.loss_trace));
                    }
                    if (cval < current) {
                        rel = (current - cval) / std::max(std::abs(current), 1e-300);
                        phi_f = std::move(cand_f);
                        phi_b = std::move(cand_b);
                        current = cval;
                        result.loss_trace.push_back({li, it, cval, cterms, ccyc});
                        accepted = true;
                        break;
                    }
                }
                if (accepted) break;
            }
            if (!accepted) {
                stalled = true;  // no descent direction left at this scale
                break;
            }
            if (rel < cfg.converge_tol) {
                if (++small_streak >= 5) {
                    stalled = true;
                    break;
                }
            } else {
                small_streak = 0;
            }
        }
        if (li == 0) {
            finest_converged = stalled;  // ran out of descent, not out of budget
        }
        if (li > 0) {
            phi_f = prolong_field(phi_f, fpyr[li - 1].dims());
            phi_b = prolong_field(phi_b, fpyr[li - 1].dims());
            project_inside(phi_f);
            project_inside(phi_b);
        }
    }

    result.phi_fwd = std::move(phi_f);
    result.phi_bwd = std::move(phi_b);
    result.jacobian_positive_fraction = jacobian_positive_fraction(result.phi_fwd);
    result.converged = finest_converged;
    return result;
}

}  // namespace crossreg
