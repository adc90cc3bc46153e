#include "crossreg/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace crossreg {

SoftPrediction::SoftPrediction(Dims3 dims, std::vector<float> probabilities,
                               std::array<double, 3> spacing, std::array<double, 3> origin)
    : dims_(dims), spacing_(spacing), origin_(origin), data_(std::move(probabilities)) {
    if (data_.size() != dims_.count()) {
        throw ShapeError("probability count does not match grid extents " + to_string(dims_));
    }
    for (float v : data_) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw ParameterError("prediction probabilities must lie in [0, 1]");
        }
    }
}

SoftPrediction SoftPrediction::from_mask(const LabelMask& mask) {
    std::vector<float> p(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) p[i] = mask[i];
    return SoftPrediction(mask.dims(), std::move(p), mask.spacing(), mask.origin());
}

SoftPrediction SoftPrediction::from_volume(const Volume& vol) {
    return SoftPrediction(vol.dims(), vol.data(), vol.spacing(), vol.origin());
}

void TverskyParams::validate() const {
    if (alpha < 0.0 || beta < 0.0) throw ParameterError("tversky alpha/beta must be nonnegative");
    if (alpha + beta <= 0.0) throw ParameterError("tversky alpha + beta must be positive");
    if (!(gamma > 0.0)) throw ParameterError("tversky gamma must be positive");
    if (!(epsilon > 0.0)) throw ParameterError("tversky epsilon must be positive");
}

namespace {

void check_same_dims(const Dims3& a, const Dims3& b, const char* what) {
    if (!(a == b)) {
        throw ShapeError(std::string(what) + " extents differ: " + to_string(a) + " vs " +
                         to_string(b));
    }
}

struct SoftCounts {
    double tp = 0.0, fn = 0.0, fp = 0.0, sum_p = 0.0, sum_g = 0.0;
};

SoftCounts soft_counts(const SoftPrediction& pred, const LabelMask& gt) {
    check_same_dims(pred.dims(), gt.dims(), "prediction/ground-truth");
    SoftCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double p = pred[i];
        const double g = gt[i];
        c.tp += p * g;
        c.fn += (1.0 - p) * g;
        c.fp += p * (1.0 - g);
        c.sum_p += p;
        c.sum_g += g;
    }
    return c;
}

}  // namespace

double dice_loss(const SoftPrediction& pred, const LabelMask& gt, double epsilon) {
    if (!(epsilon > 0.0)) throw ParameterError("dice epsilon must be positive");
    const SoftCounts c = soft_counts(pred, gt);
    return 1.0 - (2.0 * c.tp + epsilon) / (c.sum_p + c.sum_g + epsilon);
}

double tversky_index(const SoftPrediction& pred, const LabelMask& gt, double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw ParameterError("tversky alpha/beta must be nonnegative");
    const SoftCounts c = soft_counts(pred, gt);
    const double denom = c.tp + alpha * c.fn + beta * c.fp;
    if (denom <= 0.0) return 1.0;  // no signal on either side
    return c.tp / denom;
}

double focal_tversky_loss(const SoftPrediction& pred, const LabelMask& gt,
                          const TverskyParams& params) {
    params.validate();
    const double ti = tversky_index(pred, gt, params.alpha, params.beta);
    return std::pow(1.0 - ti, params.gamma);
}

double jaccard(const LabelMask& a, const LabelMask& b) {
    check_same_dims(a.dims(), b.dims(), "mask");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += (a[i] & b[i]);
        uni += (a[i] | b[i]);
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double dice_coefficient(const LabelMask& a, const LabelMask& b) {
    check_same_dims(a.dims(), b.dims(), "mask");
    std::size_t inter = 0, total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += (a[i] & b[i]);
        total += a[i] + b[i];
    }
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double median_score(const std::vector<double>& values) {
    if (values.empty()) throw ParameterError("median of an empty sequence");
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool localization_hit(const LabelMask& pred, const LabelMask& gt) {
    check_same_dims(pred.dims(), gt.dims(), "mask");
    if (gt.empty_mask()) throw ParameterError("localization check needs a nonempty ground truth");
    double cx = 0.0, cy = 0.0, cz = 0.0;
    std::size_t n = 0;
    const Dims3& d = pred.dims();
    std::size_t i = 0;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            for (int x = 0; x < d.nx; ++x, ++i) {
                if (pred[i]) {
                    cx += x;
                    cy += y;
                    cz += z;
                    ++n;
                }
            }
        }
    }
    if (n == 0) return false;
    const int rx = static_cast<int>(std::lround(cx / n));
    const int ry = static_cast<int>(std::lround(cy / n));
    const int rz = static_cast<int>(std::lround(cz / n));
    if (!d.contains(rx, ry, rz)) return false;
    return gt.at(rx, ry, rz) != 0;
}

double mutual_information(const Volume& intensity, const LabelMask& labels, int n_bins,
                          const LabelMask* roi) {
    check_same_dims(intensity.dims(), labels.dims(), "intensity/label");
    if (n_bins < 2) throw ParameterError("mutual information needs at least 2 bins");
    if (roi) {
        check_same_dims(intensity.dims(), roi->dims(), "intensity/roi");
        if (roi->empty_mask()) throw ParameterError("mutual information ROI is empty");
    }
    std::vector<double> joint(static_cast<std::size_t>(n_bins) * 2, 0.0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < intensity.size(); ++i) {
        if (roi && !(*roi)[i]) continue;
        int bin = static_cast<int>(static_cast<double>(intensity[i]) * n_bins);
        bin = std::clamp(bin, 0, n_bins - 1);
        joint[2 * static_cast<std::size_t>(bin) + labels[i]] += 1.0;
        ++total;
    }
    const double inv = 1.0 / static_cast<double>(total);
    double p_label[2] = {0.0, 0.0};
    std::vector<double> p_bin(n_bins, 0.0);
    for (int b = 0; b < n_bins; ++b) {
        for (int l = 0; l < 2; ++l) {
            joint[2 * b + l] *= inv;
            p_bin[b] += joint[2 * b + l];
            p_label[l] += joint[2 * b + l];
        }
    }
    double mi = 0.0;
    for (int b = 0; b < n_bins; ++b) {
        for (int l = 0; l < 2; ++l) {
            const double pj = joint[2 * b + l];
            if (pj > 0.0) {
                mi += pj * std::log2(pj / (p_bin[b] * p_label[l]));
            }
        }
    }
    return std::max(mi, 0.0);
}

}  // namespace crossreg
