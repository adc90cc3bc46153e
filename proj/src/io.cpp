#include "crossreg/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace crossreg {

namespace {

constexpr int kNiftiHeaderSize = 348;
constexpr float kVoxOffset = 352.0f;
constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

template <typename T>
void put(std::vector<char>& buf, std::size_t offset, T value) {
    std::memcpy(buf.data() + offset, &value, sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t offset) {
    T value;
    std::memcpy(&value, buf.data() + offset, sizeof(T));
    return value;
}

std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<char> buf(static_cast<std::size_t>(size));
    if (size > 0) in.read(buf.data(), size);
    if (!in) throw IoError("read failure on " + path);
    return buf;
}

void write_file(const std::string& path, const std::vector<char>& buf) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failure on " + path);
}

struct NiftiInfo {
    Dims3 dims;
    std::array<double, 3> spacing;
    std::array<double, 3> origin;
    std::int16_t datatype = 0;
    float scl_slope = 0.0f;
    float scl_inter = 0.0f;
    std::size_t data_offset = 0;
};

NiftiInfo parse_nifti_header(const std::vector<char>& buf, const std::string& path) {
    if (buf.size() < kNiftiHeaderSize) {
        throw FormatError(path + ": header truncated (" + std::to_string(buf.size()) +
                          " bytes, need 348)");
    }
    const auto sizeof_hdr = get<std::int32_t>(buf, 0);
    if (sizeof_hdr != kNiftiHeaderSize) {
        if (sizeof_hdr == 1543569408) {  // 348 byte-swapped
            throw FormatError(path + ": sizeof_hdr is byte-swapped; big-endian files unsupported");
        }
        throw FormatError(path + ": sizeof_hdr is " + std::to_string(sizeof_hdr) + ", expected 348");
    }
    char magic[4];
    std::memcpy(magic, buf.data() + 344, 4);
    if (std::memcmp(magic, "n+1\0", 4) != 0) {
        if (std::memcmp(magic, "ni1\0", 4) == 0) {
            throw FormatError(path + ": magic \"ni1\" (detached header variant) unsupported");
        }
        throw FormatError(path + ": magic is not \"n+1\"");
    }
    std::int16_t dim[8];
    std::memcpy(dim, buf.data() + 40, sizeof(dim));
    if (dim[0] < 3 || dim[0] > 7) {
        throw FormatError(path + ": dim[0] is " + std::to_string(dim[0]) + ", expected 3..7");
    }
    for (int k = 4; k <= dim[0]; ++k) {
        if (dim[k] > 1) {
            throw FormatError(path + ": dim[" + std::to_string(k) + "] = " +
                              std::to_string(dim[k]) + "; only 3-D payloads are supported");
        }
    }
    if (dim[1] < 1 || dim[2] < 1 || dim[3] < 1) {
        throw FormatError(path + ": dim[1..3] must be positive");
    }
    NiftiInfo info;
    info.dims = {dim[1], dim[2], dim[3]};
    float pixdim[8];
    std::memcpy(pixdim, buf.data() + 76, sizeof(pixdim));
    for (int k = 1; k <= 3; ++k) {
        if (!(pixdim[k] > 0.0f) || !std::isfinite(pixdim[k])) {
            throw FormatError(path + ": pixdim[" + std::to_string(k) + "] must be positive");
        }
    }
    info.spacing = {pixdim[1], pixdim[2], pixdim[3]};
    info.origin = {get<float>(buf, 268), get<float>(buf, 272), get<float>(buf, 276)};
    info.datatype = get<std::int16_t>(buf, 70);
    if (info.datatype != kDtUint8 && info.datatype != kDtInt16 && info.datatype != kDtFloat32) {
        throw FormatError(path + ": unsupported datatype " + std::to_string(info.datatype) +
                          " (supported: uint8=2, int16=4, float32=16)");
    }
    const std::int16_t bitpix = get<std::int16_t>(buf, 72);
    const std::int16_t expected_bitpix =
        info.datatype == kDtUint8 ? 8 : info.datatype == kDtInt16 ? 16 : 32;
    if (bitpix != expected_bitpix) {
        throw FormatError(path + ": bitpix " + std::to_string(bitpix) + " does not match datatype");
    }
    const float vox_offset = get<float>(buf, 108);
    if (vox_offset < kNiftiHeaderSize || vox_offset != std::floor(vox_offset)) {
        throw FormatError(path + ": vox_offset " + std::to_string(vox_offset) + " invalid");
    }
    info.data_offset = static_cast<std::size_t>(vox_offset);
    info.scl_slope = get<float>(buf, 112);
    info.scl_inter = get<float>(buf, 116);
    const std::size_t payload = info.dims.count() * (expected_bitpix / 8);
    if (buf.size() < info.data_offset + payload) {
        throw FormatError(path + ": payload truncated (need " +
                          std::to_string(info.data_offset + payload) + " bytes, file has " +
                          std::to_string(buf.size()) + ")");
    }
    return info;
}

std::vector<char> build_nifti_header(const Dims3& dims, const std::array<double, 3>& spacing,
                                     const std::array<double, 3>& origin, std::int16_t datatype,
                                     std::int16_t bitpix) {
    std::vector<char> buf(352, 0);
    put<std::int32_t>(buf, 0, kNiftiHeaderSize);
    buf[38] = 'r';  // regular
    std::int16_t dim[8] = {3, static_cast<std::int16_t>(dims.nx),
                           static_cast<std::int16_t>(dims.ny),
                           static_cast<std::int16_t>(dims.nz), 1, 1, 1, 1};
    std::memcpy(buf.data() + 40, dim, sizeof(dim));
    put<std::int16_t>(buf, 70, datatype);
    put<std::int16_t>(buf, 72, bitpix);
    float pixdim[8] = {1.0f, static_cast<float>(spacing[0]), static_cast<float>(spacing[1]),
                       static_cast<float>(spacing[2]), 0, 0, 0, 0};
    std::memcpy(buf.data() + 76, pixdim, sizeof(pixdim));
    put<float>(buf, 108, kVoxOffset);
    put<float>(buf, 112, 1.0f);  // scl_slope
    put<float>(buf, 116, 0.0f);  // scl_inter
    put<std::int16_t>(buf, 252, 1);  // qform_code: identity rotation, offset only
    put<float>(buf, 268, static_cast<float>(origin[0]));
    put<float>(buf, 272, static_cast<float>(origin[1]));
    put<float>(buf, 276, static_cast<float>(origin[2]));
    std::memcpy(buf.data() + 344, "n+1\0", 4);
    return buf;
}

}  // namespace

Volume read_nifti_volume(const std::string& path) {
    const std::vector<char> buf = read_file(path);
    const NiftiInfo info = parse_nifti_header(buf, path);
    const std::size_t n = info.dims.count();
    std::vector<float> data(n);
    const char* p = buf.data() + info.data_offset;
    if (info.datatype == kDtFloat32) {
        std::memcpy(data.data(), p, n * sizeof(float));
    } else if (info.datatype == kDtUint8) {
        for (std::size_t i = 0; i < n; ++i) {
            data[i] = static_cast<float>(static_cast<const unsigned char*>(
                static_cast<const void*>(p))[i]);
        }
    } else {
        std::vector<std::int16_t> raw(n);
        std::memcpy(raw.data(), p, n * sizeof(std::int16_t));
        for (std::size_t i = 0; i < n; ++i) data[i] = raw[i];
    }
    if (info.scl_slope != 0.0f && info.scl_slope != 1.0f) {
        for (float& v : data) v = v * info.scl_slope + info.scl_inter;
    } else if (info.scl_slope == 1.0f && info.scl_inter != 0.0f) {
        for (float& v : data) v += info.scl_inter;
    }
    return Volume(info.dims, std::move(data), info.spacing, info.origin);
}

LabelMask read_nifti_label(const std::string& path) {
    const std::vector<char> buf = read_file(path);
    const NiftiInfo info = parse_nifti_header(buf, path);
    if (info.datatype == kDtFloat32) {
        throw FormatError(path + ": float32 payload cannot load as a label mask");
    }
    if ((info.scl_slope != 0.0f && info.scl_slope != 1.0f) || info.scl_inter != 0.0f) {
        throw FormatError(path + ": scaled payload cannot load as a label mask");
    }
    const std::size_t n = info.dims.count();
    std::vector<std::uint8_t> data(n);
    const char* p = buf.data() + info.data_offset;
    if (info.datatype == kDtUint8) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto v = static_cast<const unsigned char*>(static_cast<const void*>(p))[i];
            if (v > 1) {
                throw FormatError(path + ": mask payload contains value " + std::to_string(v) +
                                  " (labels must be 0 or 1)");
            }
            data[i] = v;
        }
    } else {
        std::vector<std::int16_t> raw(n);
        std::memcpy(raw.data(), p, n * sizeof(std::int16_t));
        for (std::size_t i = 0; i < n; ++i) {
            if (raw[i] != 0 && raw[i] != 1) {
                throw FormatError(path + ": mask payload contains value " +
                                  std::to_string(raw[i]) + " (labels must be 0 or 1)");
            }
            data[i] = static_cast<std::uint8_t>(raw[i]);
        }
    }
    return LabelMask(info.dims, std::move(data), info.spacing, info.origin);
}

void write_nifti(const Volume& vol, const std::string& path) {
    std::vector<char> buf =
        build_nifti_header(vol.dims(), vol.spacing(), vol.origin(), kDtFloat32, 32);
    const std::size_t payload = vol.size() * sizeof(float);
    buf.resize(352 + payload);
    std::memcpy(buf.data() + 352, vol.data().data(), payload);
    write_file(path, buf);
}

void write_nifti(const LabelMask& mask, const std::string& path) {
    std::vector<char> buf =
        build_nifti_header(mask.dims(), mask.spacing(), mask.origin(), kDtUint8, 8);
    buf.resize(352 + mask.size());
    std::memcpy(buf.data() + 352, mask.data().data(), mask.size());
    write_file(path, buf);
}

namespace {

constexpr std::int32_t kFieldTag = 0x444C4644;  // "DFLD" little-endian
constexpr std::int32_t kFieldVersion = 1;

}  // namespace

DisplacementField read_field(const std::string& path) {
    const std::vector<char> buf = read_file(path);
    if (buf.size() < 24) {
        throw FormatError(path + ": field header truncated (" + std::to_string(buf.size()) +
                          " bytes, need 24)");
    }
    const auto tag = get<std::int32_t>(buf, 0);
    if (tag != kFieldTag) {
        throw FormatError(path + ": field tag mismatch");
    }
    const auto version = get<std::int32_t>(buf, 4);
    if (version != kFieldVersion) {
        throw FormatError(path + ": unsupported field version " + std::to_string(version));
    }
    const Dims3 dims{get<std::int32_t>(buf, 8), get<std::int32_t>(buf, 12),
                     get<std::int32_t>(buf, 16)};
    if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) {
        throw FormatError(path + ": field extents must be positive");
    }
    const std::size_t expected = 24 + dims.count() * 3 * sizeof(float);
    if (buf.size() != expected) {
        throw FormatError(path + ": field payload size mismatch (expected " +
                          std::to_string(expected) + " bytes, file has " +
                          std::to_string(buf.size()) + ")");
    }
    std::vector<float> raw(dims.count() * 3);
    std::memcpy(raw.data(), buf.data() + 24, raw.size() * sizeof(float));
    std::vector<double> vec(raw.begin(), raw.end());
    return DisplacementField(dims, std::move(vec));
}

void write_field(const DisplacementField& field, const std::string& path) {
    const Dims3& d = field.dims();
    std::vector<char> buf(24 + field.raw().size() * sizeof(float));
    put<std::int32_t>(buf, 0, kFieldTag);
    put<std::int32_t>(buf, 4, kFieldVersion);
    put<std::int32_t>(buf, 8, d.nx);
    put<std::int32_t>(buf, 12, d.ny);
    put<std::int32_t>(buf, 16, d.nz);
    put<std::int32_t>(buf, 20, 0);
    std::vector<float> raw(field.raw().size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(field.raw()[i]);
    std::memcpy(buf.data() + 24, raw.data(), raw.size() * sizeof(float));
    write_file(path, buf);
}

namespace {

bool needs_quoting(const std::string& cell) {
    return cell.find_first_of(",\"\n") != std::string::npos;
}

std::string quote_cell(const std::string& cell) {
    if (!needs_quoting(cell)) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

void write_row(std::ostream& os, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) os << ',';
        os << quote_cell(row[i]);
    }
    os << '\n';
}

std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

}  // namespace

void write_csv(const CsvTable& table, const std::string& path) {
    std::ostringstream os;
    write_row(os, table.header);
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) {
            throw ParameterError("CSV row width does not match header");
        }
        write_row(os, row);
    }
    const std::string s = os.str();
    write_file(path, std::vector<char>(s.begin(), s.end()));
}

CsvTable read_csv(const std::string& path) {
    const std::vector<char> buf = read_file(path);
    CsvTable table;
    std::string content(buf.begin(), buf.end());
    std::istringstream is(content);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && is.eof()) break;
        auto cells = parse_csv_line(line);
        if (first) {
            table.header = std::move(cells);
            first = false;
        } else {
            table.rows.push_back(std::move(cells));
        }
    }
    if (first) throw FormatError(path + ": CSV file has no header row");
    return table;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_report(const std::vector<ReportRow>& rows, const std::string& path) {
    CsvTable t;
    t.header = {"experiment",     "combination", "jaccard_median", "jaccard_min",
                "jaccard_max",    "dice_median", "dice_min",       "dice_max"};
    for (const ReportRow& r : rows) {
        t.rows.push_back({r.experiment, r.combination, format_double(r.jaccard_median),
                          format_double(r.jaccard_min), format_double(r.jaccard_max),
                          format_double(r.dice_median), format_double(r.dice_min),
                          format_double(r.dice_max)});
    }
    write_csv(t, path);
}

void write_slice_ppm(const Volume& vol, int axis, int index, const LabelMask* overlay_red,
                     const LabelMask* overlay_green, const std::string& path) {
    if (axis < 0 || axis > 2) throw ParameterError("slice axis must be 0, 1 or 2");
    const Dims3& d = vol.dims();
    const int extent = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
    if (index < 0 || index >= extent) {
        throw ParameterError("slice index " + std::to_string(index) + " out of range [0, " +
                             std::to_string(extent - 1) + "]");
    }
    for (const LabelMask* m : {overlay_red, overlay_green}) {
        if (m && !(m->dims() == d)) {
            throw ShapeError("overlay extents differ from the volume");
        }
    }
    const int w = axis == 0 ? d.ny : d.nx;
    const int h = axis == 2 ? d.ny : d.nz;
    std::ostringstream os;
    os << "P6\n" << w << " " << h << "\n255\n";
    std::string header = os.str();
    std::vector<char> buf(header.begin(), header.end());
    buf.reserve(buf.size() + static_cast<std::size_t>(w) * h * 3);
    for (int row = 0; row < h; ++row) {
        for (int col = 0; col < w; ++col) {
            int x, y, z;
            if (axis == 0) {
                x = index; y = col; z = row;
            } else if (axis == 1) {
                x = col; y = index; z = row;
            } else {
                x = col; y = row; z = index;
            }
            const double v = std::clamp(static_cast<double>(vol.at(x, y, z)), 0.0, 1.0);
            double r = v, g = v, b = v;
            if (overlay_red && overlay_red->at(x, y, z)) {
                r = 0.5 * r + 0.5;
                g = 0.5 * g;
                b = 0.5 * b;
            }
            if (overlay_green && overlay_green->at(x, y, z)) {
                r = 0.5 * r;
                g = 0.5 * g + 0.5;
                b = 0.5 * b;
            }
            buf.push_back(static_cast<char>(std::lround(r * 255)));
            buf.push_back(static_cast<char>(std::lround(g * 255)));
            buf.push_back(static_cast<char>(std::lround(b * 255)));
        }
    }
    write_file(path, buf);
}

}  // namespace crossreg
