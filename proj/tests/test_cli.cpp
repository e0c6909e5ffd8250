#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"
#include "texmax/binary_io.hpp"

namespace {

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + TEXMAX_CLI + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("cli: usage errors exit 2") {
    testing::ScratchDir dir("cli_usage");
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("make-backbone --out " + (dir / "b.txbb").string() + " --bogus 1") == 2);
    CHECK(run("make-backbone") == 2);
    CHECK(run("make-backbone --kind fourier --out " + (dir / "b.txbb").string()) == 2);
    CHECK(run("describe --phrases-model " + (dir / "missing.txhd").string() + " --image x.ppm") == 2);
    CHECK(run("cloud --scores " + (dir / "missing.json").string() + " --out x.ppm") == 2);
    CHECK(run("make-backbone --out " + (dir / "b.txbb").string(), "TEXMAX_THREADS=zero") == 2);
    CHECK(run("make-backbone --out " + (dir / "b.txbb").string(), "TEXMAX_THREADS=1") == 0);
    CHECK(run("--help") == 0);
}

TEST_CASE("cli: data and format errors exit 3") {
    testing::ScratchDir dir("cli_data");
    REQUIRE(run("make-backbone --out " + (dir / "b.txbb").string()) == 0);

    const std::filesystem::path bad = dir / "bad.txbb";
    write_text(bad, "TXBB garbage");
    write_text(dir / "scores.json", "{\"phrases\": [{\"phrase\": \"x\"");
    CHECK(run("cloud --scores " + (dir / "scores.json").string() + " --out " + (dir / "c.ppm").string()) == 3);

    std::filesystem::create_directories(dir / "data");
    write_text(dir / "data" / "labels.csv", "path,label\nnope.ppm,a\n");
    CHECK(run("train --data " + (dir / "data").string() + " --backbone " + (dir / "b.txbb").string() + " --out " +
              (dir / "m").string()) == 3);
    write_text(dir / "data" / "labels.csv", "path,label,extra\n");
    CHECK(run("train --data " + (dir / "data").string() + " --backbone " + (dir / "b.txbb").string() + " --out " +
              (dir / "m").string()) == 3);
    write_text(dir / "data" / "img.ppm", "P6\n2 2\n255\nabc");
    write_text(dir / "data" / "labels.csv", "path,label\nimg.ppm,a\n");
    CHECK(run("train --data " + (dir / "data").string() + " --backbone " + (dir / "b.txbb").string() + " --out " +
              (dir / "m").string()) == 3);

    REQUIRE(run("make-synthetic --kind-set stripes_v,dots --count 4 --size 32 --out " + (dir / "syn").string()) == 0);
    CHECK(run("train --data " + (dir / "syn").string() + " --backbone " + bad.string() + " --out " +
              (dir / "m").string()) == 3);
}

TEST_CASE("cli: small end-to-end run") {
    testing::ScratchDir dir("cli_e2e");
    const std::string d = dir.path().string();
    REQUIRE(run("make-backbone --kind gabor --seed 7 --out " + d + "/b.txbb") == 0);
    REQUIRE(run("make-synthetic --kind-set stripes_v,stripes_h --count 10 --size 32 --seed 1 --out " + d + "/syn") == 0);
    REQUIRE(run("train --data " + d + "/syn --backbone " + d + "/b.txbb --out " + d + "/m --epochs 20") == 0);
    const auto report = nlohmann::json::parse(std::ifstream(dir / "m/report.json"));
    CHECK(report["classes"] == nlohmann::json::array({"stripes_h", "stripes_v"}));
    CHECK(report["test_accuracy"]["per_tap"].size() == 4);

    REQUIRE(run("invert --heads " + d + "/m/heads.txhd --backbone " + d + "/b.txbb --class stripes_v --size 32 --iters 5 --out " +
                d + "/v.ppm") == 0);
    CHECK(std::filesystem::exists(dir / "v.trace.csv"));
    CHECK(run("invert --heads " + d + "/m/heads.txhd --backbone " + d + "/b.txbb --class nope --out " + d + "/x.ppm") == 2);

    REQUIRE(run("describe --phrases-model " + d + "/m/phrases.txhd --backbone " + d + "/b.txbb --image " + d +
                "/v.ppm --out " + d + "/s.json") == 0);
    const auto scores = nlohmann::json::parse(std::ifstream(dir / "s.json"));
    CHECK(scores["k"] == 20);
    CHECK(!scores["phrases"].empty());
    CHECK(run("describe --phrases-model " + d + "/m/phrases.txhd --image " + d + "/v.ppm") == 2);

    REQUIRE(run("cloud --scores " + d + "/s.json --out " + d + "/c.ppm --layout " + d + "/c.json") == 0);
    const texmax::Bytes first = texmax::read_file(dir / "c.ppm");
    REQUIRE(run("cloud --scores " + d + "/s.json --out " + d + "/c.ppm") == 0);
    CHECK(texmax::read_file(dir / "c.ppm") == first);
    CHECK(run("cloud --scores " + d + "/s.json --canvas 10x10 --out " + d + "/c.ppm") == 2);
    CHECK(run("cloud --scores " + d + "/s.json --canvas wide --out " + d + "/c.ppm") == 2);
}

TEST_CASE("cli: gradcheck exits 0") {
    CHECK(run("gradcheck --seeds 1") == 0);
}
