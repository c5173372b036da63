#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "gradlab/image_io.hpp"
#include "gradlab/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string err;
};

const fs::path kTmp = fs::temp_directory_path() / "gradlab_cli_test";

Run run(const std::string& args) {
    fs::create_directories(kTmp);
    const auto err = kTmp / "stderr.txt";
    const std::string cmd = std::string("env -u GRADLAB_DATA_DIR ") + GRADLAB_CLI_PATH + " " + args + " >" +
                            (kTmp / "stdout.txt").string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    std::ifstream in(err);
    std::ostringstream s;
    s << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

std::map<std::string, std::string> files_in(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        out[fs::relative(e.path(), dir).string()] = s.str();
    }
    return out;
}

}  // namespace

TEST_CASE("help and version succeed") {
    CHECK(run("--help").code == 0);
    CHECK(run("--version").code == 0);
}

TEST_CASE("unknown flags and subcommands fail") {
    CHECK(run("--frobnicate").code != 0);
    CHECK(run("attack --no-such-flag").code != 0);
}

TEST_CASE("missing data directory exits with code 2") {
    const auto r = run("direct-invert --dataset mnist --data-dir /nonexistent/gradlab --out " + (kTmp / "x").string());
    CHECK(r.code == 2);
    CHECK(r.err.find("/nonexistent/gradlab") != std::string::npos);
    CHECK(r.err.find("GRADLAB_DATA_DIR") != std::string::npos);
}

TEST_CASE("malformed experiment config fails") {
    fs::create_directories(kTmp);
    const auto cfg = kTmp / "bad.json";
    std::ofstream(cfg) << "{\"kind\": \"attack\", \"trials\": \"many\"}";
    const auto r = run("experiment --config " + cfg.string() + " --out " + (kTmp / "bad_out").string());
    CHECK(r.code == 1);
    CHECK(!r.err.empty());
}

TEST_CASE("same seed twice gives identical outputs") {
    const auto a = kTmp / "seed_a";
    const auto b = kTmp / "seed_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const std::string common = "direct-invert --dataset synthetic --classes 300 --height 8 --width 8 --batch 4 --trials 3 "
                               "--seed 42 --out ";
    REQUIRE(run(common + a.string()).code == 0);
    REQUIRE(run(common + b.string()).code == 0);
    const auto fa = files_in(a);
    CHECK(!fa.empty());
    CHECK(fa == files_in(b));
}

TEST_CASE("metrics subcommand scores a pair directory") {
    const auto dir = kTmp / "pairs";
    fs::remove_all(dir);
    fs::create_directories(dir);
    gradlab::SeededRng rng(1);
    const auto img = gradlab::uniform(rng, {8, 8}, 0, 1);
    gradlab::write_pgm(dir / "same_source.pgm", img);
    gradlab::write_pgm(dir / "same_target.pgm", img);
    const auto out = kTmp / "metrics_out";
    fs::remove_all(out);
    REQUIRE(run("metrics --pairs " + dir.string() + " --out " + out.string()).code == 0);
    bool found = false;
    for (const auto& [name, text] : files_in(out)) {
        if (name.ends_with(".csv") && text.find("same") != std::string::npos) found = true;
    }
    CHECK(found);
}
