#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "resmin/kinetics.hpp"
#include "resmin/store.hpp"

using namespace resmin;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("resmin_store_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Vector one(double v) {
    Vector x(1);
    x << v;
    return x;
}

BasisSet small_basis() {
    const auto grid = make_time_grid(0, 1, 30, GridScheme::uniform);
    const auto m = kinetics::model();
    return assemble_basis({build_snapshot(m, one(0.05), kinetics::initial_state(), grid),
                           build_snapshot(m, one(0.9), kinetics::initial_state(), grid)});
}

void rewrite(const fs::path& p, const std::string& from, const std::string& to) {
    std::ifstream in(p);
    std::string s((std::istreambuf_iterator<char>(in)), {});
    in.close();
    const auto pos = s.find(from);
    ASSERT_NE(pos, std::string::npos);
    s.replace(pos, from.size(), to);
    std::ofstream(p) << s;
}

} // namespace

TEST(Store, RoundTripIsLossless) {
    TempDir d;
    const auto b = small_basis();
    save_store(b, d.path, {{"name", "kinetics"}});
    const auto c = load_store(d.path);
    ASSERT_EQ(c.size(), b.size());
    EXPECT_TRUE(c.grid == b.grid);
    EXPECT_EQ((c.X - b.X).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((c.F - b.F).cwiseAbs().maxCoeff(), 0.0);
    for (std::size_t j = 0; j < b.size(); ++j) EXPECT_EQ(c.snapshots[j].param[0], b.snapshots[j].param[0]);
    EXPECT_EQ(read_manifest(d.path)["model"]["name"], "kinetics");
}

TEST(Store, EmptyDirectoryFails) {
    TempDir d;
    try {
        load_store(d.path);
        FAIL();
    } catch (const LoadFailure& e) {
        EXPECT_NE(std::string(e.what()).find("manifest.json"), std::string::npos);
    }
}

TEST(Store, GridLengthMismatchFails) {
    TempDir d;
    save_store(small_basis(), d.path);
    // Drop the last grid point from the manifest.
    auto man = read_manifest(d.path);
    man["grid"]["t_points"].erase(29);
    man["grid"]["sq_weights"].erase(29);
    std::ofstream(d.path / "manifest.json") << man.dump();
    try {
        load_store(d.path);
        FAIL();
    } catch (const LoadFailure& e) {
        EXPECT_EQ(e.field(), "rows");
        EXPECT_NE(e.file().find("snap_0000_state.csv"), std::string::npos);
    }
}

TEST(Store, MissingMatrixFileNamed) {
    TempDir d;
    save_store(small_basis(), d.path);
    fs::remove(d.path / "snap_0001_forcing.csv");
    try {
        load_store(d.path);
        FAIL();
    } catch (const LoadFailure& e) {
        EXPECT_NE(e.file().find("snap_0001_forcing.csv"), std::string::npos);
    }
}

TEST(Store, MalformedManifestAndFields) {
    TempDir d;
    save_store(small_basis(), d.path);
    rewrite(d.path / "manifest.json", "\"state_dim\"", "\"state_dimension\"");
    try {
        load_store(d.path);
        FAIL();
    } catch (const LoadFailure& e) {
        EXPECT_EQ(e.field(), "state_dim");
    }
    std::ofstream(d.path / "manifest.json") << "{ not json";
    EXPECT_THROW(load_store(d.path), LoadFailure);
}

TEST(Store, BadNumberAndHeaderReported) {
    TempDir d;
    save_store(small_basis(), d.path);
    rewrite(d.path / "snap_0000_state.csv", "t,x1,x2,x3", "t,u,v,w");
    EXPECT_THROW(load_store(d.path), LoadFailure);
    save_store(small_basis(), d.path);
    rewrite(d.path / "snap_0000_state.csv", "\n0.0333", "\nabc");
    try {
        load_store(d.path);
        FAIL();
    } catch (const LoadFailure& e) {
        EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
    }
}
