#include "fsuda/checkpoint.hpp"
#include "fsuda/cli.hpp"
#include "fsuda/dataset.hpp"
#include "fsuda/fingerprint.hpp"
#include "fsuda/synthetic.hpp"
#include "fsuda/tensor_file.hpp"
#include "fsuda/verify.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sys/wait.h>

namespace fsuda {
namespace {

namespace fs = std::filesystem;

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "fsuda");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

int cli_process(const std::string& args) {
    const int status = std::system((std::string(FSUDA_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

SyntheticSpec small_spec(std::uint64_t seed) {
    SyntheticSpec s;
    s.train_classes = 4;
    s.val_classes = 2;
    s.test_classes = 3;
    s.samples = 5;
    s.height = s.width = 16;
    s.seed = seed;
    return s;
}

TEST(TensorFile, RoundTripAndChecksum) {
    Rng rng(51);
    const Tensor<float> t = random_tensor(rng, {2, 3, 4}).cast<float>();
    const std::string bytes = encode_tensor_file(t);
    EXPECT_EQ(decode_tensor_file(bytes, "x"), t);
    std::string bad = bytes;
    bad[20] ^= 0x01;
    EXPECT_THROW(decode_tensor_file(bad, "x"), std::runtime_error);
    EXPECT_THROW(decode_tensor_file(bytes.substr(0, 10), "x"), std::runtime_error);
}

TEST(Manifest, JsonRoundTripAndValidation) {
    const Dataset ds = generate_synthetic(small_spec(1));
    const DatasetManifest m = DatasetManifest::from_json(ds.manifest().to_json());
    EXPECT_EQ(m.to_json(), ds.manifest().to_json());
    EXPECT_NO_THROW(m.validate());

    DatasetManifest overlap = m;
    overlap.test.push_back(overlap.train.front());
    EXPECT_THROW(overlap.validate(), std::runtime_error);
    DatasetManifest uncovered = m;
    uncovered.val.pop_back();
    EXPECT_THROW(uncovered.validate(), std::runtime_error);
    DatasetManifest one_domain = m;
    one_domain.files.pop_back();
    EXPECT_THROW(one_domain.validate(), std::runtime_error);
}

TEST(Synthetic, SampleCountsExtentsAndSplits) {
    const SyntheticSpec spec = small_spec(2);
    const Dataset ds = generate_synthetic(spec);
    EXPECT_EQ(ds.manifest().classes, 9);
    EXPECT_EQ(ds.manifest().samples_per_class, 5);
    EXPECT_EQ(ds.classes(Split::kTrain).size(), 4u);
    EXPECT_EQ(ds.classes(Split::kVal).size(), 2u);
    EXPECT_EQ(ds.classes(Split::kTest).size(), 3u);
    for (Index c = 0; c < 9; ++c)
        for (Domain d : {Domain::kSource, Domain::kTarget}) {
            const auto& stack = ds.images(c, d);
            EXPECT_EQ(stack.shape(), (Shape{5, 16, 16, 1}));
            EXPECT_GE(stack.values().minCoeff(), 0.0f);
            EXPECT_LE(stack.values().maxCoeff(), 1.0f);
        }
}

TEST(Synthetic, RenderingIsPure) {
    const SyntheticSpec spec = small_spec(3);
    const Dataset ds = generate_synthetic(spec);
    const Tensor<float> again = render_sample(spec, 4, 2, Domain::kTarget);
    Tensor<float> stored({16, 16, 1});
    stored.values() = ds.images(4, Domain::kTarget).values().segment(2 * 256, 256);
    EXPECT_EQ(again, stored);
    EXPECT_NE(render_sample(spec, 4, 2, Domain::kSource), again);
}

TEST(Synthetic, SameSeedByteIdenticalDirectories) {
    testing::TempDir dir("gen");
    write_synthetic(dir / "a", small_spec(4), false);
    write_synthetic(dir / "b", small_spec(4), false);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        const std::string name = e.path().filename().string();
        EXPECT_EQ(read_file(e.path().string()), read_file(dir / ("b/" + name))) << name;
        ++files;
    }
    EXPECT_EQ(files, 1u + 2u * 9u);
    write_synthetic(dir / "c", small_spec(5), false);
    EXPECT_NE(read_file(dir / "a/manifest.json"), read_file(dir / "c/manifest.json"));
}

TEST(Synthetic, ExistingDirectoryNeedsForce) {
    testing::TempDir dir("force");
    write_synthetic(dir / "d", small_spec(6), false);
    EXPECT_THROW(write_synthetic(dir / "d", small_spec(6), false), std::runtime_error);
    EXPECT_NO_THROW(write_synthetic(dir / "d", small_spec(6), true));
}

TEST(LoadDataset, RoundTripPreservesEveryPixel) {
    testing::TempDir dir("load");
    const Dataset ds = generate_synthetic(small_spec(7));
    save_dataset(dir / "d", ds, false);
    const Dataset back = load_dataset(dir / "d");
    DatasetManifest stored = back.manifest();
    std::set<std::uint32_t> crcs;
    for (auto& f : stored.files) {
        crcs.insert(f.crc32);
        f.crc32 = 0;
    }
    EXPECT_EQ(crcs.size(), stored.files.size());
    EXPECT_EQ(stored.to_json(), ds.manifest().to_json());
    for (Index c = 0; c < 9; ++c)
        for (Domain d : {Domain::kSource, Domain::kTarget}) EXPECT_EQ(back.images(c, d), ds.images(c, d));
}

TEST(LoadDataset, TamperedByteFailsChecksum) {
    testing::TempDir dir("tamper");
    write_synthetic(dir / "d", small_spec(8), false);
    const std::string victim = dir / ("d/" + class_file_name(3, Domain::kTarget));
    std::string bytes = read_file(victim);
    bytes[bytes.size() / 2] ^= 0x10;
    write_file_atomic(victim, bytes);
    try {
        load_dataset(dir / "d");
        FAIL() << "tampered file accepted";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
    }
}

TEST(LoadDataset, MissingDomainFileIsNamed) {
    testing::TempDir dir("missing");
    write_synthetic(dir / "d", small_spec(9), false);
    const std::string name = class_file_name(2, Domain::kSource);
    fs::remove(dir / ("d/" + name));
    try {
        load_dataset(dir / "d");
        FAIL() << "missing file accepted";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find(name), std::string::npos) << e.what();
    }
}

TEST(LoadDataset, RejectsSplitOverlapAndExtentMismatch) {
    testing::TempDir dir("bad");
    write_synthetic(dir / "d", small_spec(10), false);
    const std::string manifest_path = dir / "d/manifest.json";
    const std::string original = read_file(manifest_path);

    auto j = nlohmann::json::parse(original);
    j["splits"]["test"].push_back(j["splits"]["train"][0]);
    write_file_atomic(manifest_path, j.dump());
    EXPECT_THROW(load_dataset(dir / "d"), std::runtime_error);

    j = nlohmann::json::parse(original);
    j["image"]["height"] = 15;
    write_file_atomic(manifest_path, j.dump());
    EXPECT_THROW(load_dataset(dir / "d"), std::runtime_error);

    EXPECT_THROW(load_dataset(dir / "nowhere"), std::runtime_error);
}

// Logistic regression on raw pixels, trained on training-split classes and
// scored on held-out classes.
TEST(DomainGap, LinearProbeSeparatesDomains) {
    const Dataset ds = generate_synthetic(SyntheticSpec{});
    const Index d = ds.height() * ds.width() * ds.channels();
    auto design = [&](Split split) {
        std::vector<Index> classes = ds.classes(split);
        const Index per = ds.manifest().samples_per_class;
        Matrix<double> x(static_cast<Index>(classes.size()) * per * 2, d + 1);
        Vector<double> y(x.rows());
        Index r = 0;
        for (Index c : classes)
            for (Domain dom : {Domain::kSource, Domain::kTarget})
                for (Index s = 0; s < per; ++s, ++r) {
                    x.row(r).head(d) = ds.images(c, dom).values().segment(s * d, d).cast<double>().transpose();
                    x(r, d) = 1.0;
                    y(r) = dom == Domain::kTarget ? 1.0 : 0.0;
                }
        return std::pair{x, y};
    };
    const auto [xtr, ytr] = design(Split::kTrain);
    const auto [xte, yte] = design(Split::kTest);
    Vector<double> w = Vector<double>::Zero(d + 1);
    for (int it = 0; it < 300; ++it) {
        const Vector<double> p = (1.0 + (-(xtr * w).array()).exp()).inverse().matrix();
        w -= 0.5 * xtr.transpose() * (p - ytr) / static_cast<double>(xtr.rows());
    }
    const Vector<double> score = xte * w;
    Index correct = 0;
    for (Index i = 0; i < score.size(); ++i) correct += (score(i) > 0) == (yte(i) > 0.5);
    const double accuracy = static_cast<double>(correct) / static_cast<double>(score.size());
    EXPECT_GT(accuracy, 0.9) << accuracy;
}

TEST(Fingerprint, OrderIndependentAndSensitive) {
    const std::string a = config_fingerprint({{"seed", "1"}, {"ways", "5"}});
    EXPECT_EQ(a.size(), 16u);
    EXPECT_EQ(a, config_fingerprint({{"ways", "5"}, {"seed", "1"}}));
    EXPECT_NE(a, config_fingerprint({{"seed", "2"}, {"ways", "5"}}));
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(cli({"--no-such-flag"}), 2);
    EXPECT_EQ(cli({}), 2);
    EXPECT_EQ(cli({"train", "--data", "x", "--out", "y", "--episodes", "0"}), 2);
    EXPECT_EQ(cli({"train", "--data", "x"}), 2);
    EXPECT_EQ(cli({"eval", "--data", "x", "--split", "train"}), 2);
    EXPECT_EQ(cli({"eval", "--data", "x", "--precision", "half"}), 2);
    EXPECT_EQ(cli_process("train --bogus"), 2);
    EXPECT_EQ(cli_process("--help"), 0);
    EXPECT_EQ(cli_process("train --help"), 0);
}

TEST(Cli, RuntimeErrorsExitOne) { EXPECT_EQ(cli({"eval", "--data", "/nonexistent/fsuda"}), 1); }

TEST(Cli, SelftestAndGradcheckPass) {
    EXPECT_EQ(cli_process("selftest"), 0);
    EXPECT_EQ(cli_process("gradcheck --instances 2"), 0);
    EXPECT_EQ(cli_process("gradcheck --instances 2 --tolerance 0"), 1);
}

TEST(Cli, EndToEndWithFingerprints) {
    testing::TempDir dir("cli");
    const std::string data = dir / "data";
    ASSERT_EQ(cli({"gen-data", "--out", data, "--train-classes", "3", "--val-classes", "1", "--test-classes", "2",
                   "--samples", "6", "--height", "9", "--width", "9"}),
              0);
    EXPECT_EQ(cli({"gen-data", "--out", data}), 1);

    const std::vector<std::string> common{"--data", data, "-N", "2", "--nq", "2", "--target-queries", "4",
                                          "--blocks", "2", "--channels", "4"};
    auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
        head.insert(head.end(), common.begin(), common.end());
        head.insert(head.end(), tail.begin(), tail.end());
        return head;
    };
    // Multi-scale grids need a 5x5 map, so the micro run disables matching.
    ASSERT_EQ(cli(with({"train"}, {"--out", dir / "a.ckpt", "--episodes", "6", "--lambda-msm", "0", "--metrics",
                                   dir / "a.jsonl"})),
              0);
    ASSERT_EQ(cli(with({"train"}, {"--out", dir / "b.ckpt", "--episodes", "6", "--lambda-msm", "0"})), 0);
    EXPECT_EQ(read_file(dir / "a.ckpt"), read_file(dir / "b.ckpt"));
    const auto meta_a = nlohmann::json::parse(read_file(dir / "a.ckpt.json"));
    const auto meta_b = nlohmann::json::parse(read_file(dir / "b.ckpt.json"));
    EXPECT_EQ(meta_a["fingerprint"], meta_b["fingerprint"]);

    std::istringstream lines(read_file(dir / "a.jsonl"));
    std::string line;
    int count = 0;
    while (std::getline(lines, line)) {
        const auto rec = nlohmann::json::parse(line);
        EXPECT_EQ(rec["fingerprint"], meta_a["fingerprint"]);
        EXPECT_TRUE(rec["l_msm"].is_null());
        ++count;
    }
    EXPECT_EQ(count, 6);

    ASSERT_EQ(cli(with({"eval"}, {"--checkpoint", dir / "a.ckpt", "--tasks", "5", "--out", dir / "r1.json"})), 0);
    ASSERT_EQ(cli(with({"eval"}, {"--checkpoint", dir / "a.ckpt", "--tasks", "5", "--out", dir / "r2.json",
                                  "--threads", "1"})),
              0);
    EXPECT_EQ(read_file(dir / "r1.json"), read_file(dir / "r2.json"));
    const auto report = nlohmann::json::parse(read_file(dir / "r1.json"));
    EXPECT_EQ(report["tasks"], 5);
    EXPECT_EQ(report["accuracies"].size(), 5u);
    EXPECT_EQ(report["fingerprint"].get<std::string>().size(), 16u);

    ASSERT_EQ(cli(with({"eval"}, {"--checkpoint", dir / "a.ckpt", "--tasks", "5", "--out", dir / "r3.json",
                                  "--seed", "2"})),
              0);
    EXPECT_NE(nlohmann::json::parse(read_file(dir / "r3.json"))["fingerprint"], report["fingerprint"]);

    ASSERT_EQ(cli(with({"eval"}, {"--tasks", "3", "--precision", "double"})), 0);
}

}  // namespace
}  // namespace fsuda
