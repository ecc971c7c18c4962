#include "smallgs/config.hpp"
#include "smallgs/io.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <cstring>
#include <functional>
#include <fstream>
#include <sstream>

using namespace smallgs;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("smallgs_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    out << s;
}

// FNV-1a, written here so the comparison does not go through the library.
std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Hand-assembled NPY file for checks that must not depend on write_tensor.
std::string npy_bytes(const std::string& descr, const std::string& shape, const std::string& payload,
                      char major = 1, bool fortran = false) {
    std::string header = "{'descr': '" + descr + "', 'fortran_order': " + (fortran ? "True" : "False") +
                         ", 'shape': " + shape + ", }";
    const std::size_t total = 10 + header.size() + 1;
    header += std::string((64 - total % 64) % 64, ' ') + "\n";
    std::string out = "\x93NUMPY";
    out += major;
    out += '\0';
    const auto len = static_cast<std::uint16_t>(header.size());
    out += static_cast<char>(len & 0xff);
    out += static_cast<char>(len >> 8);
    return out + header + payload;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::kInternal;
}

}  // namespace

TEST(Npy, ZerosRoundTripBitExact) {
    TempDir dir;
    const std::vector<double> zeros(4, 0.0);
    const Tensor t = Tensor::from_doubles({2, 2}, zeros);
    write_tensor(dir.path() / "z.npy", t);
    const Tensor back = read_tensor(dir.path() / "z.npy");
    EXPECT_EQ(back.dtype, DType::kFloat32);
    EXPECT_EQ(back.shape, (std::vector<std::size_t>{2, 2}));
    EXPECT_EQ(back.bytes, t.bytes);
}

TEST(Npy, LargeRandomRoundTripHashIdentical) {
    TempDir dir;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    Tensor t;
    t.dtype = DType::kFloat32;
    t.shape = {512, 384, 16};
    t.bytes.resize(512 * 384 * 16 * 4);
    for (std::size_t i = 0; i < t.bytes.size(); i += 4) {
        const float v = u(rng);
        std::memcpy(&t.bytes[i], &v, 4);
    }
    const fs::path a = dir.path() / "a.npy", b = dir.path() / "b.npy";
    write_tensor(a, t);
    const Tensor back = read_tensor(a);
    EXPECT_EQ(back.shape, t.shape);
    EXPECT_EQ(fnv1a(std::string(back.bytes.begin(), back.bytes.end())),
              fnv1a(std::string(t.bytes.begin(), t.bytes.end())));
    write_tensor(b, back);
    EXPECT_EQ(fnv1a(slurp(a)), fnv1a(slurp(b)));
}

TEST(Npy, ReadsHandWrittenFile) {
    TempDir dir;
    double vals[3] = {1.5, -2.0, 0.25};
    spit(dir.path() / "f8.npy", npy_bytes("<f8", "(3,)", std::string(reinterpret_cast<char*>(vals), 24)));
    const Tensor t = read_tensor(dir.path() / "f8.npy");
    EXPECT_EQ(t.dtype, DType::kFloat64);
    EXPECT_EQ(t.to_doubles(), (std::vector<double>{1.5, -2.0, 0.25}));

    spit(dir.path() / "u1.npy", npy_bytes("|u1", "(1, 2)", std::string("\x00\xff", 2)));
    const Tensor u = read_tensor(dir.path() / "u1.npy");
    EXPECT_EQ(u.dtype, DType::kUInt8);
    EXPECT_EQ(u.to_doubles(), (std::vector<double>{0.0, 255.0}));
}

TEST(Npy, WrittenHeaderIsAligned) {
    TempDir dir;
    write_tensor(dir.path() / "x.npy", Tensor::from_doubles({3}, std::vector<double>{1, 2, 3}));
    const std::string s = slurp(dir.path() / "x.npy");
    ASSERT_GT(s.size(), 10u);
    EXPECT_EQ(s.substr(0, 6), "\x93NUMPY");
    const std::size_t hlen = static_cast<unsigned char>(s[8]) | (static_cast<unsigned char>(s[9]) << 8);
    EXPECT_EQ((10 + hlen) % 64, 0u);
    EXPECT_EQ(s[10 + hlen - 1], '\n');
}

TEST(Npy, RejectsUnsupported) {
    TempDir dir;
    const std::string four(4, '\0');
    spit(dir.path() / "be.npy", npy_bytes(">f4", "(1,)", four));
    spit(dir.path() / "i4.npy", npy_bytes("<i4", "(1,)", four));
    spit(dir.path() / "fo.npy", npy_bytes("<f4", "(1,)", four, 1, true));
    spit(dir.path() / "v2.npy", npy_bytes("<f4", "(1,)", four, 2));
    spit(dir.path() / "junk.npy", "not an npy file");
    spit(dir.path() / "short.npy", npy_bytes("<f4", "(2,)", four));
    EXPECT_EQ(code_of([&] { read_tensor(dir.path() / "be.npy"); }), ErrorCode::kUnsupportedFormat);
    EXPECT_EQ(code_of([&] { read_tensor(dir.path() / "i4.npy"); }), ErrorCode::kUnsupportedFormat);
    EXPECT_EQ(code_of([&] { read_tensor(dir.path() / "fo.npy"); }), ErrorCode::kUnsupportedFormat);
    EXPECT_EQ(code_of([&] { read_tensor(dir.path() / "v2.npy"); }), ErrorCode::kUnsupportedFormat);
    EXPECT_EQ(code_of([&] { read_tensor(dir.path() / "junk.npy"); }), ErrorCode::kParse);
    EXPECT_EQ(code_of([&] { read_tensor(dir.path() / "short.npy"); }), ErrorCode::kParse);
    EXPECT_EQ(code_of([&] { read_tensor(dir.path() / "missing.npy"); }), ErrorCode::kIo);
}

TEST(Npy, PlanarMapRoundTrip) {
    TempDir dir;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    PlanarMap m(7, 5, 3);
    for (auto& v : m.data()) v = u(rng);
    write_planar_map(dir.path() / "m.npy", m, DType::kFloat64);
    const PlanarMap back = read_planar_map(dir.path() / "m.npy");
    ASSERT_TRUE(back.same_dims(m));
    ASSERT_EQ(back.channels(), 3);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(back.data()[i], m.data()[i]);

    PlanarMap d(7, 5, 1, 2.5);
    write_planar_map(dir.path() / "d.npy", d, DType::kFloat32, true);
    EXPECT_EQ(read_tensor_header(dir.path() / "d.npy").shape, (std::vector<std::size_t>{5, 7}));
    EXPECT_EQ(read_planar_map(dir.path() / "d.npy").at(6, 4, 0), 2.5);
}

TEST(Tum, IdentityLine) {
    const TimedPose p = parse_tum_line("0.0 0 0 0 0 0 0 1");
    EXPECT_EQ(p.timestamp, 0.0);
    EXPECT_LT(p.pose.rotation_angle(), 1e-15);
    EXPECT_EQ(p.pose.translation(), Vec3::Zero());
}

TEST(Tum, QuaternionOrderOnDisk) {
    // qx qy qz qw = (0, 0, sin 45, cos 45): 90 degrees about z.
    const TimedPose p = parse_tum_line("1 0 0 0 0 0 0.7071067811865476 0.7071067811865476");
    EXPECT_LT((p.pose.apply(Vec3(1, 0, 0)) - Vec3(0, 1, 0)).norm(), 1e-12);
}

TEST(Tum, SevenFieldsNamesLine) {
    try {
        parse_tum("# header\n0 0 0 0 0 0 0 1\n1 0 0 0 0 0 1\n");
        FAIL() << "expected a parse error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kParse);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(Tum, QuaternionNormChecks) {
    EXPECT_EQ(code_of([] { parse_tum_line("0 0 0 0 0 0 0 1.01"); }), ErrorCode::kParse);
    const TimedPose p = parse_tum_line("0 0 0 0 0 0 0 1.0005");
    EXPECT_NEAR(p.pose.rotation().norm(), 1.0, 1e-15);
    EXPECT_EQ(code_of([] { parse_tum_line("0 0 0 0 0 0 0 x"); }), ErrorCode::kParse);
}

TEST(Tum, RoundTrip) {
    TempDir dir;
    std::mt19937_64 rng(11);
    std::vector<TimedPose> poses;
    for (int i = 0; i < 20; ++i) poses.push_back({1305031102.175304 + i / 30.0, tu::random_pose(rng, 3.0, 5.0)});
    const Trajectory t(poses);
    write_tum(dir.path() / "t.txt", t);
    const Trajectory back = read_tum(dir.path() / "t.txt");
    ASSERT_EQ(back.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        EXPECT_LE(std::abs(back[i].timestamp - t[i].timestamp), 1e-9 * std::abs(t[i].timestamp));
        EXPECT_LT((back[i].pose.matrix() - t[i].pose.matrix()).norm(), 1e-9);
    }
    EXPECT_EQ(format_tum(back).substr(0, 1), "#");
}

TEST(Tum, FormatDoubleShortestRoundTrip) {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 1305031102.175304}) {
        EXPECT_EQ(std::stod(format_double(v)), v);
    }
    EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Config, EmptyObjectGivesDefaults) {
    const RunConfig c = parse_config("{}");
    EXPECT_EQ(c.window.window_size, 15);
    EXPECT_EQ(c.window.lambda_s, 0.2);
    EXPECT_EQ(c.feature_channels, 16);
    EXPECT_EQ(c.window.lambda_c_max, 1.0);
    EXPECT_EQ(c.window.loss_space, LossSpace::kRgb);
}

TEST(Config, FeatureModeWithThreeChannels) {
    const RunConfig c = parse_config(R"({"loss_space": "feature", "f": 3})");
    EXPECT_EQ(c.window.loss_space, LossSpace::kFeature);
    EXPECT_EQ(c.feature_channels, 3);
}

TEST(Config, Errors) {
    auto message = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::kConfig);
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message(R"({"window_size": 1})").find("window_size"), std::string::npos);
    EXPECT_NE(message(R"({"bogus": 3})").find("bogus"), std::string::npos);
    EXPECT_NE(message(R"({"raster": {"tile": 3}})").find("raster.tile"), std::string::npos);
    EXPECT_NE(message(R"({"lambda_s": "x"})").find("lambda_s"), std::string::npos);
    EXPECT_NE(message(R"({"loss_space": "lab"})").find("loss_space"), std::string::npos);
    EXPECT_NE(message("[1, 2]"), "no error");
    EXPECT_NE(message("{"), "no error");
}

TEST(Config, SerializedConfigParsesBack) {
    RunConfig c = parse_config(R"({"window_size": 7, "loss_space": "feature", "f": 4, "raster": {"tile_size": 8}})");
    const RunConfig back = parse_config(config_to_json(c));
    EXPECT_EQ(back.window.window_size, 7);
    EXPECT_EQ(back.feature_channels, 4);
    EXPECT_EQ(back.window.raster.tile_size, 8);
    EXPECT_EQ(config_to_json(back), config_to_json(c));
}

namespace {

void write_dataset(const fs::path& root, int frames, int w, int h, bool feat) {
    for (const char* d : {"rgb", "depth", "mask", "feat"}) fs::create_directories(root / d);
    write_intrinsics(root / "intrinsics.json", CameraIntrinsics(20, 20, (w - 1) / 2.0, (h - 1) / 2.0, w, h));
    std::vector<double> ts;
    for (int i = 0; i < frames; ++i) {
        ts.push_back(0.1 * i);
        write_planar_map(Dataset::frame_path(root, "rgb", i), PlanarMap(w, h, 3, 0.5));
        write_planar_map(Dataset::frame_path(root, "depth", i), PlanarMap(w, h, 1, 3.0), DType::kFloat32, true);
        write_planar_map(Dataset::frame_path(root, "mask", i), PlanarMap(w, h, 1, 1.0), DType::kFloat32, true);
        if (feat) write_planar_map(Dataset::frame_path(root, "feat", i), PlanarMap(w, h, 5, 0.1));
    }
    write_timestamps(root / "timestamps.txt", ts);
}

}  // namespace

TEST(Dataset, OpensValidLayout) {
    TempDir dir;
    write_dataset(dir.path(), 3, 8, 6, true);
    const Dataset d = Dataset::open(dir.path());
    EXPECT_EQ(d.frame_count(), 3);
    EXPECT_EQ(d.intrinsics().width, 8);
    EXPECT_TRUE(d.has_features());
    EXPECT_EQ(d.feature_channels(), 5);
    EXPECT_EQ(d.rgb(2).channels(), 3);
    EXPECT_EQ(d.depth(1).at(7, 5, 0), 3.0);
    EXPECT_EQ(Dataset::frame_path(dir.path(), "rgb", 12).filename(), "000012.npy");
}

TEST(Dataset, RejectsDimensionMismatch) {
    TempDir dir;
    write_dataset(dir.path(), 3, 8, 6, false);
    write_planar_map(Dataset::frame_path(dir.path(), "depth", 1), PlanarMap(8, 5, 1));
    EXPECT_EQ(code_of([&] { Dataset::open(dir.path()); }), ErrorCode::kShapeMismatch);
}

TEST(Dataset, RejectsMissingFrameAndBadTimestamps) {
    TempDir a;
    write_dataset(a.path(), 3, 8, 6, false);
    fs::remove(Dataset::frame_path(a.path(), "mask", 2));
    EXPECT_NE(code_of([&] { Dataset::open(a.path()); }), ErrorCode::kInternal);

    TempDir b;
    write_dataset(b.path(), 3, 8, 6, false);
    write_timestamps(b.path() / "timestamps.txt", {0.0, 0.2, 0.1});
    EXPECT_NE(code_of([&] { Dataset::open(b.path()); }), ErrorCode::kInternal);

    TempDir c;
    write_dataset(c.path(), 3, 8, 6, false);
    EXPECT_EQ(code_of([&] { Dataset::open(c.path()).features(0); }), ErrorCode::kIo);
}
