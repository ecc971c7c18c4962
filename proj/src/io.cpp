#include "smallgs/io.hpp"

#include "internal.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace smallgs {

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 6> kMagic = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

const char* descr_of(DType t) {
    switch (t) {
        case DType::kFloat32: return "<f4";
        case DType::kFloat64: return "<f8";
        case DType::kUInt8: return "|u1";
    }
    return "";
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Value following 'key': in a NPY header dict.
std::string dict_value(const std::string& header, const std::string& key, const fs::path& path) {
    const std::string needle = "'" + key + "':";
    const auto pos = header.find(needle);
    if (pos == std::string::npos) {
        throw Error(ErrorCode::kParse, path.string() + ": NPY header lacks '" + key + "'");
    }
    auto start = header.find_first_not_of(' ', pos + needle.size());
    if (start == std::string::npos) throw Error(ErrorCode::kParse, path.string() + ": bad NPY header");
    std::size_t end;
    if (header[start] == '(') {
        end = header.find(')', start);
        if (end == std::string::npos) throw Error(ErrorCode::kParse, path.string() + ": bad NPY shape");
        return header.substr(start, end - start + 1);
    }
    if (header[start] == '\'') {
        end = header.find('\'', start + 1);
        if (end == std::string::npos) throw Error(ErrorCode::kParse, path.string() + ": bad NPY descr");
        return header.substr(start + 1, end - start - 1);
    }
    end = header.find_first_of(",}", start);
    return header.substr(start, end - start);
}

struct ParsedHeader {
    TensorHeader header;
    std::size_t data_offset = 0;
};

ParsedHeader parse_header(const std::string& bytes, const fs::path& path) {
    if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        throw Error(ErrorCode::kParse, path.string() + ": not an NPY file");
    }
    const auto major = static_cast<unsigned char>(bytes[6]);
    const auto minor = static_cast<unsigned char>(bytes[7]);
    if (major != 1 || minor != 0) {
        throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": NPY version " + std::to_string(major) +
                                                       "." + std::to_string(minor) + " unsupported (need 1.0)");
    }
    const std::size_t header_len =
        static_cast<unsigned char>(bytes[8]) | (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
    if (bytes.size() < 10 + header_len) throw Error(ErrorCode::kParse, path.string() + ": truncated NPY header");
    const std::string header = bytes.substr(10, header_len);

    ParsedHeader out;
    out.data_offset = 10 + header_len;
    const std::string descr = dict_value(header, "descr", path);
    if (descr == "<f4") {
        out.header.dtype = DType::kFloat32;
    } else if (descr == "<f8") {
        out.header.dtype = DType::kFloat64;
    } else if (descr == "|u1" || descr == "<u1") {
        out.header.dtype = DType::kUInt8;
    } else if (!descr.empty() && descr[0] == '>') {
        throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": big-endian dtype '" + descr + "' unsupported");
    } else {
        throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": dtype '" + descr + "' unsupported");
    }
    const std::string fortran = dict_value(header, "fortran_order", path);
    if (fortran.find("True") != std::string::npos) {
        throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": fortran-order arrays unsupported");
    }
    const std::string shape = dict_value(header, "shape", path);
    std::size_t i = 1;
    while (i < shape.size()) {
        while (i < shape.size() && (shape[i] == ' ' || shape[i] == ',')) ++i;
        if (i >= shape.size() || shape[i] == ')') break;
        std::size_t dim = 0;
        auto [ptr, ec] = std::from_chars(shape.data() + i, shape.data() + shape.size(), dim);
        if (ec != std::errc()) throw Error(ErrorCode::kParse, path.string() + ": bad NPY shape " + shape);
        out.header.shape.push_back(dim);
        i = static_cast<std::size_t>(ptr - shape.data());
        if (i < shape.size() && shape[i] == 'L') ++i;
    }
    return out;
}

std::string format_shape(const std::vector<std::size_t>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += std::to_string(shape[i]);
        if (shape.size() == 1 || i + 1 < shape.size()) s += ",";
        if (i + 1 < shape.size()) s += " ";
    }
    return s + ")";
}

double parse_double(const std::string& token, const std::string& context) {
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw Error(ErrorCode::kParse, context + ": bad number '" + token + "'");
    return v;
}

}  // namespace

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::kFloat32: return 4;
        case DType::kFloat64: return 8;
        case DType::kUInt8: return 1;
    }
    return 0;
}

std::size_t Tensor::element_count() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::vector<double> Tensor::to_doubles() const {
    const std::size_t n = element_count();
    std::vector<double> out(n);
    switch (dtype) {
        case DType::kFloat32:
            for (std::size_t i = 0; i < n; ++i) {
                float f;
                std::memcpy(&f, bytes.data() + 4 * i, 4);
                out[i] = f;
            }
            break;
        case DType::kFloat64: std::memcpy(out.data(), bytes.data(), 8 * n); break;
        case DType::kUInt8:
            for (std::size_t i = 0; i < n; ++i) out[i] = bytes[i];
            break;
    }
    return out;
}

Tensor Tensor::from_doubles(std::vector<std::size_t> shape, std::span<const double> values, DType dtype) {
    Tensor t;
    t.dtype = dtype;
    t.shape = std::move(shape);
    if (t.element_count() != values.size()) {
        throw Error(ErrorCode::kShapeMismatch, "tensor shape does not match value count");
    }
    t.bytes.resize(values.size() * dtype_size(dtype));
    for (std::size_t i = 0; i < values.size(); ++i) {
        switch (dtype) {
            case DType::kFloat32: {
                const float f = static_cast<float>(values[i]);
                std::memcpy(t.bytes.data() + 4 * i, &f, 4);
                break;
            }
            case DType::kFloat64: std::memcpy(t.bytes.data() + 8 * i, &values[i], 8); break;
            case DType::kUInt8:
                t.bytes[i] = static_cast<std::uint8_t>(std::clamp(std::round(values[i]), 0.0, 255.0));
                break;
        }
    }
    return t;
}

Tensor read_tensor(const fs::path& path) {
    const std::string bytes = read_file(path);
    const ParsedHeader h = parse_header(bytes, path);
    Tensor t;
    t.dtype = h.header.dtype;
    t.shape = h.header.shape;
    const std::size_t need = t.element_count() * dtype_size(t.dtype);
    if (bytes.size() - h.data_offset != need) {
        throw Error(ErrorCode::kParse, path.string() + ": payload has " + std::to_string(bytes.size() - h.data_offset) +
                                           " bytes, shape needs " + std::to_string(need));
    }
    t.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset), bytes.end());
    return t;
}

TensorHeader read_tensor_header(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    std::string prefix(10, '\0');
    in.read(prefix.data(), 10);
    if (in.gcount() != 10) throw Error(ErrorCode::kParse, path.string() + ": not an NPY file");
    const std::size_t header_len = static_cast<unsigned char>(prefix[8]) |
                                   (static_cast<std::size_t>(static_cast<unsigned char>(prefix[9])) << 8);
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    return parse_header(prefix + header, path).header;
}

void write_tensor(const fs::path& path, const Tensor& tensor) {
    if (tensor.bytes.size() != tensor.element_count() * dtype_size(tensor.dtype)) {
        throw Error(ErrorCode::kShapeMismatch, "tensor byte count does not match shape");
    }
    std::string dict = std::string("{'descr': '") + descr_of(tensor.dtype) +
                       "', 'fortran_order': False, 'shape': " + format_shape(tensor.shape) + ", }";
    const std::size_t unpadded = 10 + dict.size() + 1;
    dict.append((64 - unpadded % 64) % 64, ' ');
    dict.push_back('\n');
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out.write(kMagic.data(), kMagic.size());
    const char version[2] = {1, 0};
    out.write(version, 2);
    const char len[2] = {static_cast<char>(dict.size() & 0xff), static_cast<char>((dict.size() >> 8) & 0xff)};
    out.write(len, 2);
    out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
    out.write(reinterpret_cast<const char*>(tensor.bytes.data()), static_cast<std::streamsize>(tensor.bytes.size()));
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

PlanarMap tensor_to_map(const Tensor& t) {
    if (t.shape.size() != 2 && t.shape.size() != 3) {
        throw Error(ErrorCode::kShapeMismatch, "planar map tensors must be H x W or H x W x C");
    }
    const int h = static_cast<int>(t.shape[0]);
    const int w = static_cast<int>(t.shape[1]);
    const int c = t.shape.size() == 3 ? static_cast<int>(t.shape[2]) : 1;
    return PlanarMap(w, h, c, t.to_doubles());
}

Tensor map_to_tensor(const PlanarMap& map, DType dtype, bool squeeze_single) {
    std::vector<std::size_t> shape = {static_cast<std::size_t>(map.height()), static_cast<std::size_t>(map.width())};
    if (!(squeeze_single && map.channels() == 1)) shape.push_back(static_cast<std::size_t>(map.channels()));
    return Tensor::from_doubles(std::move(shape), map.data(), dtype);
}

PlanarMap read_planar_map(const fs::path& path) {
    try {
        return tensor_to_map(read_tensor(path));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::kShapeMismatch || e.code() == ErrorCode::kInvalidArgument) {
            throw Error(e.code(), path.string() + ": " + e.what());
        }
        throw;
    }
}

void write_planar_map(const fs::path& path, const PlanarMap& map, DType dtype, bool squeeze_single) {
    write_tensor(path, map_to_tensor(map, dtype, squeeze_single));
}

std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc()) throw Error(ErrorCode::kInternal, "number formatting failed");
    return std::string(buf.data(), ptr);
}

TimedPose parse_tum_line(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> fields;
    std::string tok;
    while (ss >> tok) fields.push_back(tok);
    if (fields.size() != 8) {
        throw Error(ErrorCode::kParse, "expected 8 fields, found " + std::to_string(fields.size()));
    }
    double v[8];
    for (int i = 0; i < 8; ++i) v[i] = parse_double(fields[i], "field " + std::to_string(i + 1));
    const Quat q(v[7], v[4], v[5], v[6]);
    const double norm_err = std::abs(q.norm() - 1.0);
    if (!(norm_err <= 1e-3)) {
        throw Error(ErrorCode::kParse, "quaternion norm " + format_double(q.norm()) + " is not unit");
    }
    if (norm_err > 1e-6) detail::warn("tum_renormalized", "quaternion renormalized from norm " + format_double(q.norm()));
    return {v[0], Se3Pose(q, Vec3(v[1], v[2], v[3]))};
}

Trajectory parse_tum(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<TimedPose> poses;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        try {
            poses.push_back(parse_tum_line(line));
        } catch (const Error& e) {
            throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (poses.empty()) throw Error(ErrorCode::kParse, "trajectory has no poses");
    return Trajectory(std::move(poses));
}

Trajectory read_tum(const fs::path& path) {
    try {
        return parse_tum(read_file(path));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::kIo) throw;
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

std::string format_tum(const Trajectory& trajectory) {
    std::string out = "# timestamp tx ty tz qx qy qz qw\n";
    for (const auto& p : trajectory) {
        const Vec3& t = p.pose.translation();
        const Quat& q = p.pose.rotation();
        for (double v : {p.timestamp, t.x(), t.y(), t.z(), q.x(), q.y(), q.z()}) {
            out += format_double(v);
            out += ' ';
        }
        out += format_double(q.w());
        out += '\n';
    }
    return out;
}

void write_tum(const fs::path& path, const Trajectory& trajectory) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << format_tum(trajectory);
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

void write_intrinsics(const fs::path& path, const CameraIntrinsics& k) {
    nlohmann::json j = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

CameraIntrinsics read_intrinsics(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
        return CameraIntrinsics(j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                                j.at("cy").get<double>(), j.at("width").get<int>(), j.at("height").get<int>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kParse, path.string() + ": " + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::kIo) throw;
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

void write_timestamps(const fs::path& path, const std::vector<double>& timestamps) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    for (double t : timestamps) out << format_double(t) << '\n';
}

fs::path Dataset::frame_path(const fs::path& root, const std::string& dir, int frame) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.npy", frame);
    return root / dir / name;
}

Dataset Dataset::open(const fs::path& root) {
    if (!fs::is_directory(root)) throw Error(ErrorCode::kIo, "dataset directory not found: " + root.string());
    Dataset ds;
    ds.root_ = root;
    ds.intrinsics_ = read_intrinsics(root / "intrinsics.json");

    {
        std::istringstream in(read_file(root / "timestamps.txt"));
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            const auto last = line.find_last_not_of(" \t\r");
            ds.timestamps_.push_back(parse_double(line.substr(first, last - first + 1),
                                                  (root / "timestamps.txt").string() + " line " + std::to_string(line_no)));
        }
        if (ds.timestamps_.empty()) throw Error(ErrorCode::kParse, "timestamps.txt is empty");
        for (std::size_t i = 1; i < ds.timestamps_.size(); ++i) {
            if (!(ds.timestamps_[i] > ds.timestamps_[i - 1])) {
                throw Error(ErrorCode::kParse, "timestamps.txt must be strictly increasing (line " + std::to_string(i + 1) + ")");
            }
        }
    }

    const auto h = static_cast<std::size_t>(ds.intrinsics_.height);
    const auto w = static_cast<std::size_t>(ds.intrinsics_.width);
    const int n = ds.frame_count();
    auto count_files = [&](const std::string& dir) {
        std::size_t c = 0;
        for (const auto& e : fs::directory_iterator(root / dir)) {
            if (e.path().extension() == ".npy") ++c;
        }
        return c;
    };
    auto check_dir = [&](const std::string& dir, auto&& check_shape) {
        if (!fs::is_directory(root / dir)) throw Error(ErrorCode::kIo, "dataset is missing directory " + (root / dir).string());
        for (int i = 0; i < n; ++i) {
            const fs::path p = frame_path(root, dir, i);
            if (!fs::exists(p)) throw Error(ErrorCode::kIo, "dataset is missing " + p.string());
            check_shape(p, read_tensor_header(p).shape);
        }
        if (count_files(dir) != static_cast<std::size_t>(n)) {
            throw Error(ErrorCode::kShapeMismatch, dir + "/ holds a different number of frames than timestamps.txt (" +
                                                       std::to_string(n) + ")");
        }
    };
    auto dims_error = [&](const fs::path& p, const std::vector<std::size_t>& shape, const std::string& want) {
        std::string got;
        for (auto d : shape) got += std::to_string(d) + " ";
        return Error(ErrorCode::kShapeMismatch, p.string() + ": shape [ " + got + "] does not match " + want +
                                                    " from intrinsics.json");
    };
    check_dir("rgb", [&](const fs::path& p, const std::vector<std::size_t>& s) {
        if (s.size() != 3 || s[0] != h || s[1] != w || s[2] != 3) throw dims_error(p, s, "H x W x 3");
    });
    auto single = [&](const fs::path& p, const std::vector<std::size_t>& s) {
        const bool ok = (s.size() == 2 && s[0] == h && s[1] == w) || (s.size() == 3 && s[0] == h && s[1] == w && s[2] == 1);
        if (!ok) throw dims_error(p, s, "H x W");
    };
    check_dir("depth", single);
    check_dir("mask", single);
    if (fs::is_directory(root / "feat")) {
        check_dir("feat", [&](const fs::path& p, const std::vector<std::size_t>& s) {
            if (s.size() != 3 || s[0] != h || s[1] != w) throw dims_error(p, s, "H x W x C");
            if (ds.feature_channels_ == 0) ds.feature_channels_ = static_cast<int>(s[2]);
            if (static_cast<int>(s[2]) != ds.feature_channels_) {
                throw Error(ErrorCode::kShapeMismatch, p.string() + ": feature channel count differs from frame 0");
            }
        });
    }
    if (fs::is_directory(root / "pointcloud")) {
        for (int i = 0; i < n; ++i) {
            const fs::path p = frame_path(root, "pointcloud", i);
            if (!fs::exists(p)) continue;
            const auto s = read_tensor_header(p).shape;
            if (s.size() != 2 || s[1] < 4) {
                throw Error(ErrorCode::kShapeMismatch, p.string() + ": point clouds must be N x (3 + k)");
            }
            ds.has_pointclouds_ = true;
        }
    }
    return ds;
}

void Dataset::check_frame(int frame) const {
    if (frame < 0 || frame >= frame_count()) {
        throw Error(ErrorCode::kInvalidArgument, "frame index " + std::to_string(frame) + " out of range [0, " +
                                                     std::to_string(frame_count()) + ")");
    }
}

PlanarMap Dataset::rgb(int frame) const {
    check_frame(frame);
    return read_planar_map(frame_path(root_, "rgb", frame));
}

PlanarMap Dataset::depth(int frame) const {
    check_frame(frame);
    return read_planar_map(frame_path(root_, "depth", frame));
}

PlanarMap Dataset::mask(int frame) const {
    check_frame(frame);
    return read_planar_map(frame_path(root_, "mask", frame));
}

PlanarMap Dataset::features(int frame) const {
    check_frame(frame);
    if (!has_features()) throw Error(ErrorCode::kIo, "dataset has no feat/ directory: " + (root_ / "feat").string());
    return read_planar_map(frame_path(root_, "feat", frame));
}

fs::path Dataset::pointcloud_path(int frame) const {
    check_frame(frame);
    const fs::path p = frame_path(root_, "pointcloud", frame);
    if (!fs::exists(p)) throw Error(ErrorCode::kIo, "dataset has no point cloud " + p.string());
    return p;
}

}  // namespace smallgs
