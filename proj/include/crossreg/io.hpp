#pragma once

#include <string>
#include <vector>

#include "crossreg/field.hpp"
#include "crossreg/volume.hpp"

namespace crossreg {

// --- NIfTI-1, uncompressed single-file (.nii) ---------------------------------
// Supported payloads: uint8, int16, float32. Spacing is taken from pixdim[1..3]
// and the origin from qoffset_{x,y,z}; orientation matrices are out of scope.

// Reads any supported payload as a scalar volume (scl_slope/scl_inter applied).
Volume read_nifti_volume(const std::string& path);

// Reads an integer payload whose values are all 0 or 1 as a mask.
LabelMask read_nifti_label(const std::string& path);

// float32 payload, vox_offset 352.
void write_nifti(const Volume& vol, const std::string& path);

// uint8 payload.
void write_nifti(const LabelMask& mask, const std::string& path);

// --- Displacement fields (.dfield) ---------------------------------------------
// Little-endian: six int32 header values (tag 'DFLD', version, nx, ny, nz,
// reserved) followed by float32 (x, y, z) triples in x-fastest order.

DisplacementField read_field(const std::string& path);
void write_field(const DisplacementField& field, const std::string& path);

// --- CSV (RFC-4180 subset, LF line endings) ------------------------------------

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

void write_csv(const CsvTable& table, const std::string& path);
CsvTable read_csv(const std::string& path);

// Shortest representation that parses back to the same double.
std::string format_double(double v);

// One aggregate line of an evaluation report: overlap statistics of one
// (experiment, combination) pair, median plus min-max spread.
struct ReportRow {
    std::string experiment;
    std::string combination;
    double jaccard_median = 0.0;
    double jaccard_min = 0.0;
    double jaccard_max = 0.0;
    double dice_median = 0.0;
    double dice_min = 0.0;
    double dice_max = 0.0;
};

void write_report(const std::vector<ReportRow>& rows, const std::string& path);

// --- Slice snapshots (binary PPM, P6) -------------------------------------------
// Renders one grid-aligned slice in grayscale, with up to two masks tinted red
// and green. `axis` is 0 (x), 1 (y) or 2 (z); `index` must be within bounds.

void write_slice_ppm(const Volume& vol, int axis, int index, const LabelMask* overlay_red,
                     const LabelMask* overlay_green, const std::string& path);

}  // namespace crossreg
