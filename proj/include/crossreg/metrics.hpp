#pragma once

#include <optional>
#include <vector>

#include "crossreg/volume.hpp"

namespace crossreg {

// Per-voxel foreground probability on a Volume grid; every value in [0, 1].
class SoftPrediction {
  public:
    SoftPrediction() = default;
    SoftPrediction(Dims3 dims, std::vector<float> probabilities,
                   std::array<double, 3> spacing = {1.0, 1.0, 1.0},
                   std::array<double, 3> origin = {0.0, 0.0, 0.0});
    static SoftPrediction from_mask(const LabelMask& mask);
    static SoftPrediction from_volume(const Volume& vol);

    const Dims3& dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }
    float operator[](std::size_t i) const { return data_[i]; }
    const std::vector<float>& data() const { return data_; }

  private:
    Dims3 dims_;
    std::array<double, 3> spacing_{1.0, 1.0, 1.0};
    std::array<double, 3> origin_{0.0, 0.0, 0.0};
    std::vector<float> data_;
};

struct TverskyParams {
    double alpha = 0.7;
    double beta = 0.3;
    double gamma = 0.75;
    double epsilon = 1e-6;

    void validate() const;
};

// 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)
double dice_loss(const SoftPrediction& pred, const LabelMask& gt, double epsilon);

// TP / (TP + alpha*FN + beta*FP) with soft counts TP = sum(p*g),
// FN = sum((1-p)*g), FP = sum(p*(1-g)). A zero denominator yields 1.
double tversky_index(const SoftPrediction& pred, const LabelMask& gt, double alpha, double beta);

// (1 - TI)^gamma
double focal_tversky_loss(const SoftPrediction& pred, const LabelMask& gt,
                          const TverskyParams& params);

// |A n B| / |A u B|; two empty masks count as perfect agreement (1).
double jaccard(const LabelMask& a, const LabelMask& b);

// 2|A n B| / (|A| + |B|); two empty masks count as perfect agreement (1).
double dice_coefficient(const LabelMask& a, const LabelMask& b);

// Middle of the sorted values; even length averages the two middle elements.
double median_score(const std::vector<double>& values);

// True iff the voxel-rounded centroid of pred's positive voxels lands on a
// positive voxel of gt. Empty pred -> false; empty gt -> ParameterError.
bool localization_hit(const LabelMask& pred, const LabelMask& gt);

// Plug-in mutual information (bits) between the binned intensity and the
// binary label, over `roi` voxels when given, otherwise over the whole grid.
// Intensities are binned with equal-width bins over [0, 1]; values outside
// clamp into the edge bins.
double mutual_information(const Volume& intensity, const LabelMask& labels, int n_bins,
                          const LabelMask* roi = nullptr);

}  // namespace crossreg
