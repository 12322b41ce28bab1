#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <json.hpp>
#include <sys/wait.h>

#include "doctest.h"

#include "clothret/dataset.hpp"
#include "clothret/regressor.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "clothret_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path(const std::string& name) { return (workdir() / name).string(); }

/// Exit status of the CLI with the given arguments; output goes to a log.
int run(const std::string& args) {
  const std::string cmd = std::string(CLOTHRET_CLI) + " " + args + " >> " + path("log.txt") + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("command line pipeline") {
  REQUIRE(run("gen-data --domain synthetic --n 6 --seed 3 --out " + path("syn.crds")) == 0);
  REQUIRE(run("gen-data --domain pseudo-real --n 5 --seed 4 --out " + path("pr.crds")) == 0);
  const clothret::Dataset syn = clothret::Dataset::load(path("syn.crds"));
  CHECK(syn.size() == 6);
  CHECK(syn.domain() == clothret::Domain::Synthetic);
  CHECK(clothret::Dataset::load(path("pr.crds")).domain() == clothret::Domain::PseudoReal);

  REQUIRE(run("train --data " + path("syn.crds") + " --epochs 2 --batch 3 --seed 5 --out " + path("w.crwt") +
              " --curve " + path("curve.csv")) == 0);
  const auto [w, garment] = clothret::load_weights(path("w.crwt"));
  CHECK(garment == clothret::GarmentKind::TShirt);
  CHECK(w.layout.cloth_vertices == syn.cloth_vertices());
  CHECK(slurp(path("curve.csv")).find('\n') != std::string::npos);

  REQUIRE(run("adapt --weights " + path("w.crwt") + " --synth " + path("syn.crds") + " --pseudo " + path("pr.crds") +
              " --epochs 1 --batch 3 --split all --out " + path("a.crwt")) == 0);
  CHECK_FALSE(clothret::load_weights(path("a.crwt")).first == w);

  REQUIRE(run("retarget --weights " + path("a.crwt") + " --sample " + path("pr.crds") + " --index 1 --refine on" +
              " --render " + path("r.ppm") + " --obj " + path("r.obj") + " --json " + path("r.json")) == 0);
  CHECK(slurp(path("r.ppm")).rfind("P6", 0) == 0);
  CHECK(slurp(path("r.obj")).find("\nf ") != std::string::npos);
  const auto rj = nlohmann::json::parse(slurp(path("r.json")));
  CHECK(rj.contains("camera"));

  REQUIRE(run("eval --weights pre=" + path("w.crwt") + " --weights post=" + path("a.crwt") + " --data " +
              path("pr.crds") + " --split all --refine off --report " + path("e.json")) == 0);
  const auto ej = nlohmann::json::parse(slurp(path("e.json")));
  REQUIRE(ej.size() == 2);
  CHECK(ej[0]["variant"] == "pre");
  CHECK(ej[1]["variant"] == "post");
  CHECK(ej[0]["n"] == 5);
  for (const char* key : {"variant", "mean_pct", "std_pct", "stability_mean", "n"}) CHECK(ej[0].contains(key));

  REQUIRE(run("gen-data --domain pseudo-real --sequence 4 --seed 6 --out " + path("seq.crds")) == 0);
  REQUIRE(run("eval --weights " + path("w.crwt") + " --data " + path("seq.crds") +
              " --split all --sequence --report " + path("s.json")) == 0);
  const auto sj = nlohmann::json::parse(slurp(path("s.json")));
  CHECK(sj[0]["stability_mean"].get<double>() >= 1.0);

  REQUIRE(run("render --data " + path("pr.crds") + " --index 0 --body --out " + path("g.ppm") + " --svg " +
              path("g.svg")) == 0);
  CHECK(slurp(path("g.svg")).find("<svg") != std::string::npos);
}

TEST_CASE("command line errors exit with status one") {
  CHECK(run("train --data " + path("missing.crds") + " --out " + path("x.crwt")) == 1);
  CHECK(run("gen-data --domain martian --n 1 --out " + path("x.crds")) != 0);
  CHECK(run("retarget --weights " + path("missing.crwt") + " --sample " + path("missing.crds")) == 1);
  CHECK(run("frobnicate") != 0);
  CHECK(run("gen-data --n 0 --out " + path("x.crds")) != 0);
  CHECK(slurp(path("log.txt")).find("missing.crds") != std::string::npos);
}
