#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "comevl/cli.hpp"

using namespace comevl;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args, const std::string& stdin_text = {}) {
    args.insert(args.begin(), "comevl");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    std::istringstream in(stdin_text);
    const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err, in);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("comevl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string p(const std::string& leaf) const { return (dir / leaf).string(); }

    void write(const std::string& leaf, const std::string& text) const {
        std::ofstream(dir / leaf) << text;
    }

    // sig: 4x4 grid, 4 layers; dino: 4x4 grid, 3 layers; width 8
    void make_stacks() const {
        ASSERT_EQ(run({"--seed", "1", "--quiet", "--out", p("sig"), "synth", "--rows", "4", "--cols", "4", "--dim", "8",
                       "--layers", "4"})
                      .code,
                  0);
        ASSERT_EQ(run({"--seed", "2", "--quiet", "--out", p("dino"), "synth", "--rows", "4", "--cols", "4", "--dim", "8",
                       "--layers", "3"})
                      .code,
                  0);
    }
};

}  // namespace

TEST_F(CliTest, CostLine) {
    const auto r = run({"cost", "2304", "576"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "8294400,1327104,6.2500\n");
    EXPECT_EQ(run({"cost", "0", "5"}).code, 3);
    EXPECT_EQ(run({"cost", "12"}).code, 1);
}

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(run({}).code, 1);
    EXPECT_EQ(run({"frobnicate"}).code, 1);
    EXPECT_EQ(run({"box"}).code, 1);
    EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, BoxEncodeDecode) {
    auto r = run({"box", "encode", "0", "0", "384", "384", "384", "384"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "<BOX> <COORD_0> <COORD_0> <COORD_999> <COORD_999> <END_BOX>\n");
    EXPECT_EQ(run({"box", "encode", "384", "384", "0", "0", "384", "384"}).out, r.out);
    r = run({"box", "decode", "<BOX> <COORD_0> <COORD_0> <COORD_999> <COORD_999> <END_BOX>", "384", "384"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "0.0000 0.0000 384.0000 384.0000\n");
    r = run({"box", "decode"}, "<BOX> <COORD_0> <COORD_0> <COORD_999> <COORD_999> <END_BOX> 100 50\n");
    EXPECT_EQ(r.out, "0.0000 0.0000 100.0000 50.0000\n");
}

TEST_F(CliTest, BoxDecodeMalformedReportsPosition) {
    const auto r = run({"box", "decode", "<BOX> <COORD_0> <COORD_0> <CORD_9> <COORD_999> <END_BOX>", "384", "384"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("token 3"), std::string::npos) << r.err;
}

TEST_F(CliTest, EntropyCsvAndMissingFile) {
    ASSERT_EQ(run({"--quiet", "--out", p("s"), "synth"}).code, 0);
    auto r = run({"entropy", "--stack", p("s")});
    EXPECT_EQ(r.code, 0);
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "layer,entropy_nats");
    double prev = 1e9;
    int rows = 0;
    while (std::getline(lines, line)) {
        const double h = std::stod(line.substr(line.find(',') + 1));
        EXPECT_LT(h, prev);
        prev = h;
        ++rows;
    }
    EXPECT_EQ(rows, 8);

    r = run({"entropy", "--stack", p("nowhere")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find(p("nowhere")), std::string::npos) << r.err;
}

TEST_F(CliTest, EntropySingleLayerAndBand) {
    ASSERT_EQ(run({"--quiet", "--out", p("one"), "synth", "--layers", "1"}).code, 0);
    auto r = run({"entropy", "--layers", p("one/layer_*.cmvt"), "--rows", "8", "--cols", "8"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 2);
    ASSERT_EQ(run({"--quiet", "--out", p("s"), "synth"}).code, 0);
    r = run({"select", "--stack", p("s"), "--band", "0", "0.5"});
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "synth: 5,6,7,8\n");
}

TEST_F(CliTest, StrictConfigNamesUnknownKey) {
    write("bad.json", R"({"seed": 1, "fusion": {"gamma": 0, "colour": 3}})");
    const auto r = run({"--config", p("bad.json"), "fuse"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("colour"), std::string::npos) << r.err;
}

TEST_F(CliTest, FuseIsDeterministicAndShaped) {
    make_stacks();
    write("run.json", R"({"seed": 3,
        "encoders": {"sig": {"manifest": "sig", "select": {"layers": [2, 3, 4]}},
                     "dino": {"manifest": "dino"}},
        "ol": {"init_scale": 0.2},
        "fusion": {"gamma": 0.3, "heads": 2, "d_h": 4},
        "projection": {"d_llm": 12, "hidden": 6}})");
    const auto a = run({"--config", p("run.json"), "--out", p("a.cmvt"), "fuse"});
    ASSERT_EQ(a.code, 0) << a.err;
    const auto b = run({"--config", p("run.json"), "--out", p("b.cmvt"), "fuse"});
    EXPECT_EQ(slurp(p("a.cmvt")), slurp(p("b.cmvt")));
    EXPECT_NE(a.out.find("(16, 12)"), std::string::npos) << a.out;
    EXPECT_EQ(cmvt::read(p("a.cmvt")).shape(), (Shape{16, 12}));
    const auto c = run({"--config", p("run.json"), "--seed", "4", "--out", p("c.cmvt"), "fuse"});
    EXPECT_NE(slurp(p("a.cmvt")), slurp(p("c.cmvt")));
}

TEST_F(CliTest, ClosedGateFuseEqualsSigAggregateBytes) {
    make_stacks();
    write("run.json", R"({"encoders": {"sig": {"manifest": "sig"}, "dino": {"manifest": "dino"}},
        "ol": {"init_scale": 0.5}, "fusion": {"gamma": 0.0}, "projection": {"identity": true}})");
    const auto r = run({"--config", p("run.json"), "--out", p("f.cmvt"), "fuse", "--dump-stages", p("st")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(p("f.cmvt")), slurp(p("st/v_sig.cmvt")));
}

TEST_F(CliTest, SavedParamsReproduceOutput) {
    make_stacks();
    write("run.json", R"({"seed": 5, "encoders": {"sig": {"manifest": "sig"}, "dino": {"manifest": "dino"}},
        "ol": {"init_scale": 0.3}, "mixing": {"sig": [0, 1, 2, 3]}, "fusion": {"gamma": 1.0},
        "projection": {"d_llm": 10}})");
    ASSERT_EQ(run({"--config", p("run.json"), "--out", p("a.cmvt"), "fuse", "--save-params", p("pp")}).code, 0);
    // rebuild a config from the saved parameter files with a different seed
    auto j = io::read_json(p("pp/params.json"));
    j["seed"] = 999;
    j["encoders"] = {{"sig", {{"manifest", "../sig"}}}, {"dino", {{"manifest", "../dino"}}}};
    io::write_json(p("pp/run.json"), j);
    const auto r = run({"--config", p("pp/run.json"), "--out", p("b.cmvt"), "fuse"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(p("a.cmvt")), slurp(p("b.cmvt")));
}

TEST_F(CliTest, MismatchedWeightsFailInCrossAttentionStage) {
    make_stacks();
    write("run.json", R"({"encoders": {"sig": {"manifest": "sig"}, "dino": {"manifest": "dino"}}})");
    ASSERT_EQ(run({"--config", p("run.json"), "--out", p("a.cmvt"), "fuse", "--save-params", p("pp")}).code, 0);
    cmvt::write(p("pp/fusion/W_K.cmvt"), Tensor({5, 8}));
    write("bad.json", R"({"encoders": {"sig": {"manifest": "sig"}, "dino": {"manifest": "dino"}},
        "fusion": {"weights": "pp/fusion"}})");
    const auto r = run({"--config", p("bad.json"), "--out", p("b.cmvt"), "fuse"});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("cross_attention"), std::string::npos) << r.err;
}

TEST_F(CliTest, RolloutHeatmaps) {
    // 2x2 grid + class token; layer 0 identity, layer 1 one-hot class row on patch 2
    Tensor a({2, 1, 5, 5});
    for (std::size_t i = 0; i < 5; ++i) a[i * 5 + i] = 1.0;
    for (std::size_t r = 0; r < 5; ++r) a[25 + r * 5 + (r == 0 ? 3 : r)] = 1.0;
    cmvt::write(p("attn.cmvt"), a);
    auto r = run({"--quiet", "--out", p("ro"), "rollout", "--attn", p("attn.cmvt")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(p("ro/rollout_000.pgm")), "P2\n2 2\n255\n0 0\n0 0\n");
    EXPECT_EQ(slurp(p("ro/rollout_001.pgm")), "P2\n2 2\n255\n0 0\n255 0\n");
    r = run({"--quiet", "--out", p("ro"), "rollout", "--attn", p("attn.cmvt"), "--mode", "chained"});
    ASSERT_EQ(r.code, 0);
    EXPECT_TRUE(fs::exists(p("ro/rollout_chain.pgm")));
}

TEST_F(CliTest, RolloutHandBuiltTwoByTwoChain) {
    // one patch: T = 2. Chain of the two matrices from the rollout unit test.
    Tensor a({2, 1, 2, 2}, {0.5, 0.5, 0.25, 0.75, 1.0, 0.0, 0.5, 0.5});
    cmvt::write(p("attn.cmvt"), a);
    const auto r = run({"--quiet", "--out", p("ro"), "rollout", "--attn", p("attn.cmvt"), "--mode", "chained"});
    ASSERT_EQ(r.code, 0) << r.err;
    // single patch: min == max, so the heatmap is flat
    EXPECT_EQ(slurp(p("ro/rollout_chain.pgm")), "P2\n1 1\n255\n0\n");
}

TEST_F(CliTest, RolloutRejectsNonStochasticRows) {
    Tensor a({1, 5, 5});
    for (std::size_t i = 0; i < 5; ++i) a[i * 5 + i] = 1.0;
    a[3 * 5 + 3] = 0.4;
    cmvt::write(p("attn.cmvt"), a);
    const auto r = run({"--out", p("ro"), "rollout", "--attn", p("attn.cmvt")});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("row 3"), std::string::npos) << r.err;
}

TEST_F(CliTest, GradcheckCsv) {
    const auto a = run({"--seed", "0", "--quiet", "gradcheck"});
    EXPECT_EQ(a.code, 0);
    EXPECT_EQ(a.out.substr(0, a.out.find('\n')), "component,param,analytic,fd,rel_err,pass");
    EXPECT_EQ(a.out.find(",false"), std::string::npos);
    EXPECT_EQ(run({"--seed", "0", "--quiet", "gradcheck"}).out, a.out);
}

TEST_F(CliTest, SynthTwiceIsIdentical) {
    ASSERT_EQ(run({"--seed", "0", "--quiet", "--out", p("a"), "synth", "--with-attention"}).code, 0);
    ASSERT_EQ(run({"--seed", "0", "--quiet", "--out", p("b"), "synth", "--with-attention"}).code, 0);
    int files = 0;
    for (const auto& e : fs::directory_iterator(p("a"))) {
        EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / e.path().filename())) << e.path();
        ++files;
    }
    EXPECT_EQ(files, 17);
}

TEST_F(CliTest, SynthSpecJson) {
    write("spec.json", R"({"layers": 3, "rows": 2, "cols": 2, "dim": 4, "kappa": [1, 2, 3]})");
    ASSERT_EQ(run({"--quiet", "--out", p("s"), "synth", "--spec", p("spec.json")}).code, 0);
    EXPECT_EQ(cmvt::read(p("s/layer_003.cmvt")).shape(), (Shape{4, 4}));
    write("geo.json", R"({"layers": 2, "kappa": {"geometric": {"start": 4, "ratio": 3}}})");
    EXPECT_EQ(run({"--quiet", "--out", p("g"), "synth", "--spec", p("geo.json")}).code, 0);
    write("bad.json", R"({"layers": 2, "kapa": [1, 2]})");
    EXPECT_EQ(run({"--quiet", "--out", p("b"), "synth", "--spec", p("bad.json")}).code, 1);
    write("neg.json", R"({"layers": 2, "kappa": [1, -2]})");
    EXPECT_EQ(run({"--quiet", "--out", p("n"), "synth", "--spec", p("neg.json")}).code, 3);
}

#ifdef COMEVL_CLI_PATH
TEST_F(CliTest, BinaryExitCodes) {
    auto status = [&](const std::string& args) {
        const std::string cmd = std::string(COMEVL_CLI_PATH) + " " + args + " >" + p("o.txt") + " 2>&1";
        const int raw = std::system(cmd.c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    };
    EXPECT_EQ(status("cost 2304 576"), 0);
    EXPECT_EQ(status("cost"), 1);
    EXPECT_EQ(status("entropy --stack " + p("missing")), 2);
    EXPECT_EQ(status("cost 0 1"), 3);
}
#endif
