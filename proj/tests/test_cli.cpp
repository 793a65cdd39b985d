#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cdgc/data.hpp"
#include "cdgc/graph.hpp"

// end-to-end checks against the installed binary; every call goes through
// the real argv/config/exit-code path
namespace {

namespace fs = std::filesystem;

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

const fs::path& scratch() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("cdgc_cli_test." + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args, const std::string& env = "") {
    const fs::path out = scratch() / "stdout.txt";
    const fs::path err = scratch() / "stderr.txt";
    std::string cmd = env + (env.empty() ? "" : " ") + "\"" CDGC_CLI_PATH "\" " + args + " >\"" +
                      out.string() + "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

std::string write_file(const std::string& name, const std::string& text) {
    const fs::path p = scratch() / name;
    std::ofstream out(p);
    out << text;
    return p.string();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

std::vector<std::string> fields_of(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    return fields;
}

std::string zero_clip_path() {
    static const std::string path = [] {
        cdgc::SkeletonClip c;
        c.frames = 2;
        c.joints = 25;
        c.label = 0;
        c.xyz.assign(2 * 25 * 3, 0.0);
        const std::string p = (scratch() / "zero.txt").string();
        cdgc::save_clip(c, p);
        return p;
    }();
    return path;
}

// nonzero and varied, so differently seeded models actually score it apart
// (an all-zero clip zeroes every activation and hides the weights entirely)
std::string ramp_clip_path() {
    static const std::string path = [] {
        cdgc::SkeletonClip c;
        c.frames = 2;
        c.joints = 25;
        c.label = 0;
        c.xyz.resize(2 * 25 * 3);
        for (std::size_t i = 0; i < c.xyz.size(); ++i)
            c.xyz[i] = 0.01 * double(i % 37) - 0.18;
        const std::string p = (scratch() / "ramp.txt").string();
        cdgc::save_clip(c, p);
        return p;
    }();
    return path;
}

}  // namespace

TEST_CASE("cli: help exits zero, missing subcommand is a usage error") {
    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("").code == 2);
    CHECK(run_cli("frobnicate").code == 2);
    CHECK(run_cli("params --no-such-flag").code == 2);
}

TEST_CASE("cli: usage and config problems all map to exit 2") {
    CHECK(run_cli("params --config /nonexistent/f.cfg").code == 2);
    const std::string bad = write_file("bad.cfg", "bogus_key = 3\n");
    RunResult r = run_cli("params --config " + bad);
    CHECK(r.code == 2);
    CHECK(r.err.find("bogus_key") != std::string::npos);
    const std::string dup = write_file("dup.cfg", "width = 3\nwidth = 4\n");
    CHECK(run_cli("params --config " + dup).code == 2);
    CHECK(run_cli("params --variant no_such_op").code == 2);
    CHECK(run_cli("gradcheck banana").code == 2);
    CHECK(run_cli("params", "CDGC_THREADS=abc").code == 2);
    CHECK(run_cli("params", "CDGC_THREADS=0").code == 2);
    CHECK(run_cli("params", "CDGC_THREADS=2").code == 0);
}

TEST_CASE("cli params: frozen counts and variant equality") {
    RunResult accel = run_cli("params --variant accelerated_cdgc");
    CHECK(accel.code == 0);
    CHECK(accel.out == "638813\n");
    RunResult matrix = run_cli("params --variant cdgc_matrix");
    CHECK(matrix.out == "3074066\n");
    RunResult vanilla = run_cli("params --variant vanilla");
    CHECK(vanilla.out == matrix.out);

    // --out redirects the payload away from stdout
    const std::string out_path = (scratch() / "count.txt").string();
    RunResult redirected = run_cli("params --variant accelerated_cdgc --out " + out_path);
    CHECK(redirected.code == 0);
    CHECK(redirected.out.empty());
    CHECK(slurp(out_path) == "638813\n");
}

TEST_CASE("cli equivcheck: passes, self-test fault is caught, zero trials warn") {
    const std::string cfg = write_file("equiv.cfg", "trials = 12\n");
    RunResult ok = run_cli("equivcheck --config " + cfg);
    CHECK(ok.code == 0);
    CHECK(ok.out.find("PASS") != std::string::npos);

    const std::string tiny = write_file("equiv3.cfg", "trials = 3\n");
    RunResult bad = run_cli("equivcheck --inject-fault --config " + tiny);
    CHECK(bad.code == 1);
    CHECK(bad.out.find("FAIL") != std::string::npos);
    CHECK(bad.out.find("V ") != std::string::npos);  // replay block with the topology

    const std::string zero = write_file("equiv0.cfg", "trials = 0\n");
    RunResult vac = run_cli("equivcheck --config " + zero);
    CHECK(vac.code == 0);
    CHECK(vac.out.find("warning") != std::string::npos);
}

TEST_CASE("cli gradcheck: operator scope passes with one seed") {
    const std::string cfg = write_file("grad.cfg", "seeds = 1\n");
    RunResult r = run_cli("gradcheck operator --config " + cfg + " --seed 3");
    CHECK(r.code == 0);
    CHECK(r.out.find("PASS") != std::string::npos);
    CHECK(r.out.find("max_rel_err") != std::string::npos);
}

TEST_CASE("cli forward: fresh model emits one normalized probability row per clip") {
    RunResult r = run_cli("forward " + zero_clip_path() + " --variant accelerated_cdgc --seed 4" +
                          " --classes 3 --config " + write_file("fwd.cfg", "width = 4\n"));
    REQUIRE(r.code == 0);
    std::vector<std::string> lines = lines_of(r.out);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0] == "clip,label,pred,p0,p1,p2");
    std::vector<std::string> f = fields_of(lines[1]);
    REQUIRE(f.size() == 6);
    CHECK(f[1] == "0");
    double sum = 0.0;
    for (int i = 3; i < 6; ++i) sum += std::stod(f[std::size_t(i)]);
    CHECK(std::abs(sum - 1.0) < 1e-9);

    // bit-for-bit reproducible: no timestamps or wall-time in this output
    RunResult again = run_cli("forward " + zero_clip_path() +
                              " --variant accelerated_cdgc --seed 4 --classes 3 --config " +
                              write_file("fwd2.cfg", "width = 4\n"));
    CHECK(again.out == r.out);
}

TEST_CASE("cli forward: command-line flags beat config-file values") {
    const std::string cfg = write_file("seed.cfg", "seed = 3\nwidth = 4\n");
    const std::string base = "forward " + ramp_clip_path() + " --classes 2 --config " + cfg;
    RunResult from_config = run_cli(base);
    RunResult flag_wins = run_cli(base + " --seed 5");
    RunResult flag_only = run_cli("forward " + ramp_clip_path() + " --classes 2 --seed 5" +
                                  " --config " + write_file("w4.cfg", "width = 4\n"));
    CHECK(from_config.code == 0);
    CHECK(flag_wins.out == flag_only.out);   // flag overrode the file
    CHECK(flag_wins.out != from_config.out); // and the file value was different
}

TEST_CASE("cli train: logs per-epoch rows and round-trips through forward") {
    const std::string cfg = write_file(
        "train.cfg", "clips_per_class = 4\nframes = 6\nwidth = 4\nbatch = 4\n");
    const std::string ckpt = (scratch() / "toy.ckpt").string();
    RunResult r = run_cli("train --classes 2 --epochs 2 --seed 6 --config " + cfg + " --out " + ckpt);
    REQUIRE(r.code == 0);
    std::vector<std::string> lines = lines_of(r.out);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "epoch,loss,accuracy,lr,seconds");
    CHECK(fields_of(lines[1])[0] == "1");
    CHECK(fields_of(lines[2])[0] == "2");

    // identical rerun differs at most in the wall-time column
    RunResult again = run_cli("train --classes 2 --epochs 2 --seed 6 --config " + cfg);
    std::vector<std::string> lines2 = lines_of(again.out);
    REQUIRE(lines2.size() == 3);
    for (std::size_t i = 1; i < 3; ++i) {
        std::vector<std::string> a = fields_of(lines[i]), b = fields_of(lines2[i]);
        REQUIRE(a.size() == 5);
        for (std::size_t j = 0; j + 1 < 5; ++j) CHECK(a[j] == b[j]);
    }

    REQUIRE(fs::exists(ckpt));
    RunResult fwd = run_cli("forward " + zero_clip_path() + " --config " +
                            write_file("fwd_ckpt.cfg", "checkpoint = " + ckpt + "\n"));
    CHECK(fwd.code == 0);
    CHECK(lines_of(fwd.out).size() == 2);
}

TEST_CASE("cli fuse: fusing a file with itself reproduces its scores") {
    const std::string scores = (scratch() / "scores.csv").string();
    RunResult fwd = run_cli("forward " + zero_clip_path() + " " + zero_clip_path() +
                            " --classes 2 --seed 7 --config " +
                            write_file("w4b.cfg", "width = 4\n") + " --out " + scores);
    REQUIRE(fwd.code == 0);

    RunResult fused = run_cli("fuse " + scores + " " + scores);
    REQUIRE(fused.code == 0);
    CHECK(fused.out == slurp(scores));

    // explicit zero weight on the second stream keeps the first bitwise
    RunResult first_only = run_cli("fuse " + scores + " " + scores + " --config " +
                                   write_file("fuse.cfg", "weights = 1, 0\n"));
    CHECK(first_only.out == slurp(scores));

    CHECK(run_cli("fuse " + scores + " " + scores + " --config " +
                  write_file("fusebad.cfg", "weights = 1\n"))
              .code == 2);
    const std::string other = write_file("other.csv", "clip,label,pred,p0,p1\nx,0,0,1,0\n");
    CHECK(run_cli("fuse " + scores + " " + other).code == 2);
}

TEST_CASE("cli alpha-sweep: one row per requested blend value, reruns identical") {
    const std::string cfg = write_file("sweep.cfg",
                                       "alphas = 0, 0.3\nseeds = 1\nclips_per_class = 3\n"
                                       "frames = 6\nwidth = 4\nbatch = 4\n");
    RunResult r = run_cli("alpha-sweep --epochs 1 --classes 2 --config " + cfg);
    REQUIRE(r.code == 0);
    std::vector<std::string> lines = lines_of(r.out);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "alpha,accuracy");
    CHECK(std::stod(fields_of(lines[1])[0]) == 0.0);
    CHECK(std::stod(fields_of(lines[2])[0]) == 0.3);

    RunResult again = run_cli("alpha-sweep --epochs 1 --classes 2 --config " + cfg);
    CHECK(again.out == r.out);

    CHECK(run_cli("alpha-sweep --alpha 1.5 --classes 2 --config " +
                  write_file("sweep2.cfg", "clips_per_class = 3\nframes = 6\nwidth = 4\n"))
              .code == 2);
}

TEST_CASE("cli bench: emits both variants with the smaller shift-variant budget") {
    const std::string cfg = write_file("bench.cfg",
                                       "clips_per_class = 2\nframes = 6\nwidth = 4\nbatch = 4\n"
                                       "timing_epochs = 2\ntarget = 0.99\n");
    RunResult r = run_cli("bench --epochs 2 --classes 2 --seed 9 --config " + cfg);
    REQUIRE(r.code == 0);
    std::vector<std::string> lines = lines_of(r.out);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "variant,params,seconds_per_epoch,epochs_to_target,target,seed");
    std::vector<std::string> m = fields_of(lines[1]), a = fields_of(lines[2]);
    CHECK(m[0] == "cdgc_matrix");
    CHECK(a[0] == "accelerated_cdgc");
    CHECK(std::stoll(a[1]) < std::stoll(m[1]));

    // reruns agree except for the wall-time column
    RunResult again = run_cli("bench --epochs 2 --classes 2 --seed 9 --config " + cfg);
    std::vector<std::string> lines2 = lines_of(again.out);
    REQUIRE(lines2.size() == 3);
    for (std::size_t i = 1; i < 3; ++i) {
        std::vector<std::string> x = fields_of(lines[i]), y = fields_of(lines2[i]);
        REQUIRE(x.size() == 6);
        for (std::size_t j = 0; j < 6; ++j)
            if (j != 2) CHECK(x[j] == y[j]);
    }

    CHECK(run_cli("bench --variant vanilla --classes 2 --config " + cfg).code == 2);
}
