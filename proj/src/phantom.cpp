#include "crossreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace crossreg {

namespace {

double ellipsoid_norm(const Ellipsoid& e, double x, double y, double z) {
    const double dx = (x - e.center[0]) / e.semi_axes[0];
    const double dy = (y - e.center[1]) / e.semi_axes[1];
    const double dz = (z - e.center[2]) / e.semi_axes[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Multi-octave background pattern in roughly [-1, 1]. The octave wavelengths
// (about 40, 18, 9 and 5.5 voxels) give the correlation windows structure at
// every pyramid scale.
double texture(double x, double y, double z) {
    double t = 0.8 * std::sin(0.16 * x + 1.3) * std::sin(0.13 * y + 0.6) * std::sin(0.15 * z + 2.1);
    t += 0.8 * std::sin(0.35 * x + 0.2) * std::sin(0.27 * y + 1.7) * std::sin(0.31 * z + 0.9);
    t += 1.0 * std::sin(0.70 * x + 2.4) * std::sin(0.65 * y + 0.8) * std::sin(0.62 * z + 1.5);
    t += 0.7 * std::sin(1.15 * x + 0.7) * std::sin(1.05 * y + 2.2) * std::sin(1.10 * z + 0.4);
    return t / 3.3;
}

// Parenchyma pattern restricted to the short octaves (about 9 and 5.5 voxel
// wavelengths). Several cycles fit inside the lesion, so the intensity
// distribution within the lesion matches the rest of the organ and the
// mutual-information bound on the invisible modality is preserved.
double organ_texture(double x, double y, double z) {
    double t = 1.0 * std::sin(0.70 * x + 2.4) * std::sin(0.65 * y + 0.8) * std::sin(0.62 * z + 1.5);
    t += 0.7 * std::sin(1.15 * x + 0.7) * std::sin(1.05 * y + 2.2) * std::sin(1.10 * z + 0.4);
    return t / 1.7;
}

}  // namespace

void PhantomSpec::validate() const {
    if (dims.nx < 8 || dims.ny < 8 || dims.nz < 8) {
        throw ParameterError("phantom grid must be at least 8 voxels per axis");
    }
    for (double s : organ.semi_axes) {
        if (!(s > 0.0)) throw ParameterError("organ semi-axes must be positive");
    }
    if (!(lesion.radius > 0.0)) throw ParameterError("lesion radius must be positive");
    if (noise_sigma < 0.0) throw ParameterError("noise_sigma must be nonnegative");
    if (deform_amplitude < 0.0) throw ParameterError("deform_amplitude must be nonnegative");
    if (!(deform_smoothness > 0.0)) throw ParameterError("deform_smoothness must be positive");

    // Lesion sphere fully inside the organ ellipsoid (conservative bound).
    const double min_axis = std::min({organ.semi_axes[0], organ.semi_axes[1], organ.semi_axes[2]});
    const double lesion_reach =
        ellipsoid_norm(organ, lesion.center[0], lesion.center[1], lesion.center[2]) +
        lesion.radius / min_axis;
    if (lesion_reach > 1.0) {
        std::ostringstream os;
        os << "lesion sphere is not contained in the organ ellipsoid (reach " << lesion_reach
           << " > 1)";
        throw ParameterError(os.str());
    }

    // Deformed organ must stay inside the grid.
    const double n_hi[3] = {double(dims.nx - 1), double(dims.ny - 1), double(dims.nz - 1)};
    for (int c = 0; c < 3; ++c) {
        const double lo = organ.center[c] - organ.semi_axes[c] - deform_amplitude;
        const double hi = organ.center[c] + organ.semi_axes[c] + deform_amplitude;
        if (lo < 0.0 || hi > n_hi[c]) {
            throw ParameterError(
                "deform_amplitude too large: the deformed organ can leave the grid");
        }
    }

    for (const Sphere& v : vessels) {
        if (!(v.radius > 0.0)) throw ParameterError("vessel radius must be positive");
        const double reach =
            ellipsoid_norm(organ, v.center[0], v.center[1], v.center[2]) + v.radius / min_axis;
        if (reach > 1.0) {
            throw ParameterError("vessel sphere is not contained in the organ ellipsoid");
        }
        if (dist(v.center, lesion.center) < v.radius + lesion.radius) {
            throw ParameterError("vessel sphere overlaps the lesion sphere");
        }
    }
}

PhantomSpec PhantomSpec::invisibility_default() {
    PhantomSpec s;
    s.vessels = {{{23, 27, 28}, 2.5}, {{26, 38, 35}, 2.5}, {{32, 23, 37}, 2.5}};
    return s;
}

namespace {

double anatomy(const PhantomSpec& s, double x, double y, double z, bool mod_a) {
    const double t = texture(x, y, z);
    double val = mod_a ? s.background_a + s.texture_amplitude_a * t
                       : s.background_b + s.texture_amplitude_b * t;
    if (ellipsoid_norm(s.organ, x, y, z) <= 1.0) {
        const double ot = organ_texture(x, y, z);
        val = mod_a ? s.organ_intensity_a + s.organ_texture_amplitude_a * ot
                    : s.organ_intensity_b + s.organ_texture_amplitude_b * ot;
        for (const Sphere& v : s.vessels) {
            const double dx = x - v.center[0], dy = y - v.center[1], dz = z - v.center[2];
            if (dx * dx + dy * dy + dz * dz <= v.radius * v.radius) {
                val = mod_a ? s.vessel_intensity_a : s.vessel_intensity_b;
                break;
            }
        }
        const double lx = x - s.lesion.center[0];
        const double ly = y - s.lesion.center[1];
        const double lz = z - s.lesion.center[2];
        if (lx * lx + ly * ly + lz * lz <= s.lesion.radius * s.lesion.radius) {
            val += mod_a ? s.lesion_contrast_a : s.lesion_contrast_b;
        }
    }
    return val;
}

DisplacementField synthesize_field(const PhantomSpec& s, std::mt19937_64& rng) {
    DisplacementField f(s.dims);
    if (s.deform_amplitude == 0.0) return f;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : f.raw()) v = normal(rng);
    f = gaussian_smooth_field(f, s.deform_smoothness);
    // Concentrate the deformation on the anatomy: organ-centred Gaussian
    // envelope, then rescale the peak magnitude to deform_amplitude.
    const Dims3& d = s.dims;
    const double wx = 1.5 * s.organ.semi_axes[0] + 2.0;
    const double wy = 1.5 * s.organ.semi_axes[1] + 2.0;
    const double wz = 1.5 * s.organ.semi_axes[2] + 2.0;
    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x, ++i) {
                const double ex = (x - s.organ.center[0]) / wx;
                const double ey = (y - s.organ.center[1]) / wy;
                const double ez = (z - s.organ.center[2]) / wz;
                const double env = std::exp(-(ex * ex + ey * ey + ez * ez));
                for (int c = 0; c < 3; ++c) f.u(i, c) *= env;
            }
        }
    }
    const double peak = f.max_magnitude();
    if (peak > 0.0) {
        const double scale = s.deform_amplitude / peak;
        for (double& v : f.raw()) v *= scale;
    }
    return f;
}

}  // namespace

PhantomPair generate_pair(const PhantomSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(static_cast<std::uint64_t>(spec.seed));
    const Dims3& d = spec.dims;

    PhantomPair out;
    out.phi_true = synthesize_field(spec, rng);

    out.mod_a = Volume(d);
    out.mod_b = Volume(d);
    out.label_a = LabelMask(d);
    out.organ_b = LabelMask(d);

    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x, ++i) {
                out.mod_a[i] = static_cast<float>(anatomy(spec, x, y, z, true));
                const double bx = x + out.phi_true.u(i, 0);
                const double by = y + out.phi_true.u(i, 1);
                const double bz = z + out.phi_true.u(i, 2);
                out.mod_b[i] = static_cast<float>(anatomy(spec, bx, by, bz, false));
                const double lx = x - spec.lesion.center[0];
                const double ly = y - spec.lesion.center[1];
                const double lz = z - spec.lesion.center[2];
                out.label_a[i] =
                    lx * lx + ly * ly + lz * lz <= spec.lesion.radius * spec.lesion.radius ? 1 : 0;
                out.organ_b[i] = ellipsoid_norm(spec.organ, bx, by, bz) <= 1.0 ? 1 : 0;
            }
        }
    }

    if (spec.noise_sigma > 0.0) {
        std::normal_distribution<double> normal(0.0, spec.noise_sigma);
        for (std::size_t k = 0; k < out.mod_a.size(); ++k) {
            out.mod_a[k] = static_cast<float>(
                std::clamp(static_cast<double>(out.mod_a[k]) + normal(rng), 0.0, 1.0));
        }
        for (std::size_t k = 0; k < out.mod_b.size(); ++k) {
            out.mod_b[k] = static_cast<float>(
                std::clamp(static_cast<double>(out.mod_b[k]) + normal(rng), 0.0, 1.0));
        }
    } else {
        for (std::size_t k = 0; k < out.mod_a.size(); ++k) {
            out.mod_a[k] = static_cast<float>(std::clamp(double(out.mod_a[k]), 0.0, 1.0));
            out.mod_b[k] = static_cast<float>(std::clamp(double(out.mod_b[k]), 0.0, 1.0));
        }
    }

    out.label_b_oracle = warp_label(out.label_a, out.phi_true);
    return out;
}

LabelMask intensity_baseline_segment(const Volume& vol, const LabelMask& roi) {
    if (vol.dims() != roi.dims()) {
        throw ShapeError("baseline volume/ROI extents differ: " + to_string(vol.dims()) + " vs " +
                         to_string(roi.dims()));
    }
    if (roi.empty_mask()) throw ParameterError("baseline ROI is empty");

    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (!roi[i]) continue;
        lo = std::min(lo, static_cast<double>(vol[i]));
        hi = std::max(hi, static_cast<double>(vol[i]));
    }
    LabelMask out(vol.dims(), vol.spacing(), vol.origin());
    if (hi - lo < 1e-12) {
        return out;  // constant ROI: no minority class exists
    }

    constexpr int kBins = 256;
    std::array<double, kBins> hist{};
    const double scale = kBins / (hi - lo);
    std::size_t total = 0;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (!roi[i]) continue;
        int b = static_cast<int>((vol[i] - lo) * scale);
        hist[std::clamp(b, 0, kBins - 1)] += 1.0;
        ++total;
    }

    // Otsu: maximize the between-class variance over thresholds.
    std::array<double, kBins> centers{};
    for (int b = 0; b < kBins; ++b) centers[b] = lo + (b + 0.5) * (hi - lo) / kBins;
    double mu_total = 0.0;
    for (int b = 0; b < kBins; ++b) mu_total += hist[b] * centers[b];
    mu_total /= total;
    double w0 = 0.0, sum0 = 0.0, best = -1.0;
    int best_bin = 0;
    for (int b = 0; b < kBins - 1; ++b) {
        w0 += hist[b] / total;
        sum0 += hist[b] * centers[b] / total;
        if (w0 <= 0.0 || w0 >= 1.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (mu_total - sum0) / (1.0 - w0);
        const double sb = w0 * (1.0 - w0) * (mu0 - mu1) * (mu0 - mu1);
        if (sb > best) {
            best = sb;
            best_bin = b;
        }
    }
    const double threshold = lo + (best_bin + 1) * (hi - lo) / kBins;

    std::size_t below = 0;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (roi[i] && vol[i] <= threshold) ++below;
    }
    const bool minority_is_below = below * 2 < total;
    for (std::size_t i = 0; i < vol.size(); ++i) {
        if (!roi[i]) continue;
        const bool is_below = vol[i] <= threshold;
        out[i] = (is_below == minority_is_below) ? 1 : 0;
    }
    return out;
}

}  // namespace crossreg
