#pragma once

#include <array>
#include <string>
#include <vector>

#include "frt/errors.hpp"
#include "frt/tensor.hpp"

namespace frt {

inline constexpr int kNumParts = 4;      // global, head, torso, leg
inline constexpr int kNumKeypoints = 12; // shoulders, elbows, wrists, hips, knees, ankles (x2)

inline constexpr int kPartGlobal = 0;
inline constexpr int kPartHead = 1;
inline constexpr int kPartTorso = 2;
inline constexpr int kPartLeg = 3;

inline const char* part_name(int p) {
    static const char* names[kNumParts] = {"global", "head", "torso", "leg"};
    return names[p];
}

/// Keypoint membership per part. The global region always covers all
/// keypoints; body regions may overlap.
struct RegionMap {
    std::array<std::vector<int>, kNumParts> keypoints;

    /// Default assignment over the 12 limb keypoints
    /// (0,1 shoulders / 2,3 elbows / 4,5 wrists / 6,7 hips / 8,9 knees /
    /// 10,11 ankles). The keypoint set carries no head point, so the head
    /// region uses the shoulders as a proxy.
    static RegionMap standard();

    void validate() const;
};

/// Part-feature record for one pedestrian image.
struct PersonDescriptor {
    int id = 0;
    int camera = 0;
    std::array<double, kNumKeypoints> kp_conf{};
    std::array<std::vector<double>, kNumParts> parts;
    std::array<double, kNumParts> vis{};

    int channels() const { return static_cast<int>(parts[0].size()); }

    bool part_is_zero(int p) const {
        for (double x : parts[p])
            if (x != 0.0) return false;
        return true;
    }

    /// 4 x c matrix of part features, rows in fixed part order.
    Tensor parts_matrix() const;
    /// 1 x 4c concatenation in fixed part order.
    Tensor concat_parts() const;
    Tensor part_row(int p) const { return Tensor::row(parts[p]); }
};

/// Per-part visibility scores: mean keypoint confidence over each region.
std::array<double, kNumParts> visibility_scores(const std::array<double, kNumKeypoints>& kp_conf,
                                               const RegionMap& regions);

/// Zeroes every part with vis strictly below delta; leaves everything else
/// (including vis itself) untouched. Idempotent.
PersonDescriptor apply_occlusion_threshold(PersonDescriptor d, double delta);

// ---------------------------------------------------------------------------
// PFV1 feature file: UTF-8 text, LF line endings.
//   line 1:  PFV1 <c> <K>
//   record:  <id> <camera> <K confidences> <4*c part values: global,head,torso,leg>
// Floats use shortest round-trip decimal form; visibility scores are derived
// from the stored confidences on read.
// ---------------------------------------------------------------------------

std::vector<PersonDescriptor> read_pfv(const std::string& path, const RegionMap& regions);
void write_pfv(const std::string& path, const std::vector<PersonDescriptor>& descriptors);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double x);
/// Strict double parse; throws ParseError on garbage or non-finite values.
double parse_double(const std::string& token, long line_no);

}  // namespace frt
