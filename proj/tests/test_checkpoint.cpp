#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "hdrsplat/checkpoint.hpp"
#include "hdrsplat/dataio.hpp"

using namespace hdrsplat;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "hdrsplat_ckpt_test";
    fs::create_directories(d);
    return d / name;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
    std::mt19937_64 rng(1);
    const Model m = make_model(fixtures::random_cloud(7, rng), 9);
    CheckpointMeta meta;
    meta.iteration = 123;
    meta.seed = 42;
    meta.fuse = FuseMode::Mean;
    meta.gi_enabled = false;
    meta.extent = 3.25;
    meta.weights.lambda2 = 0.125;
    const fs::path p = temp_path("a.bin");
    save_checkpoint(p, m, meta);
    const Checkpoint c = load_checkpoint(p);
    const auto a = param_refs(m);
    const auto b = param_refs(c.model);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].id, b[k].id);
        ASSERT_EQ(a[k].values.size(), b[k].values.size());
        EXPECT_TRUE(std::equal(a[k].values.begin(), a[k].values.end(), b[k].values.begin())) << a[k].id;
    }
    EXPECT_EQ(c.meta.iteration, 123);
    EXPECT_EQ(c.meta.seed, 42u);
    EXPECT_EQ(c.meta.fuse, FuseMode::Mean);
    EXPECT_FALSE(c.meta.gi_enabled);
    EXPECT_EQ(c.meta.extent, 3.25);
    EXPECT_EQ(c.meta.weights.lambda2, 0.125);
}

TEST(Checkpoint, RejectsCorruptFiles) {
    std::mt19937_64 rng(2);
    const Model m = make_model(fixtures::random_cloud(3, rng), 2);
    const fs::path p = temp_path("b.bin");
    save_checkpoint(p, m, {});
    const auto size = fs::file_size(p);

    fs::resize_file(p, size - 9);
    EXPECT_THROW(load_checkpoint(p), IoError);

    save_checkpoint(p, m, {});
    {
        std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
    }
    EXPECT_THROW(load_checkpoint(p), IoError);

    save_checkpoint(p, m, {});
    std::ofstream(p, std::ios::app | std::ios::binary) << "tail";
    EXPECT_THROW(load_checkpoint(p), IoError);

    EXPECT_THROW(load_checkpoint(temp_path("missing.bin")), IoError);
}
