#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "rare/graph.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = RARE_CLI_PATH;

std::string work_dir() {
  static std::string dir = [] {
    auto d = fs::temp_directory_path() / "rare_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d.string();
  }();
  return dir;
}

int run(const std::string& args, const std::string& tag) {
  const std::string out = work_dir() + "/" + tag + ".out";
  const std::string err = work_dir() + "/" + tag + ".err";
  const std::string cmd = kCli + " " + args + " >" + out + " 2>" + err;
  int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

const std::string kSmallTrain =
    " --sbm 20,20 --sbm-p-in 0.3 --sbm-p-out 0.05 --sbm-dim 8 --sbm-shift 1.0"
    " --hidden 16 --heads 2 --layers 2 --latent-dim 8 --epochs 5";

}  // namespace

TEST_CASE("pretrain writes a checkpoint and one metrics row per iteration") {
  const std::string ck = work_dir() + "/a.rare";
  const std::string csv = work_dir() + "/a.csv";
  int rc = run("pretrain" + kSmallTrain + " --seed 1 --out " + ck + " --metrics " + csv, "pre_a");
  CHECK(rc == 0);
  CHECK(fs::exists(ck));
  std::string metrics = slurp(csv);
  CHECK(count_lines(metrics) == 6);  // header + 5 iterations
  CHECK(metrics.rfind("iter,L,L_M,L_R\n", 0) == 0);
}

TEST_CASE("invalid mask ratio exits 2 and names the flag") {
  int rc = run("pretrain" + kSmallTrain + " --seed 1 --mask-ratio 1.5 --out " + work_dir() +
                   "/bad.rare --metrics " + work_dir() + "/bad.csv",
               "pre_bad");
  CHECK(rc == 2);
  CHECK(slurp(work_dir() + "/pre_bad.err").find("--mask-ratio") != std::string::npos);
}

TEST_CASE("same config and seed give byte-identical metrics") {
  const std::string csv1 = work_dir() + "/d1.csv";
  const std::string csv2 = work_dir() + "/d2.csv";
  CHECK(run("pretrain" + kSmallTrain + " --seed 7 --out " + work_dir() + "/d1.rare --metrics " +
                csv1,
            "pre_d1") == 0);
  CHECK(run("pretrain" + kSmallTrain + " --seed 7 --out " + work_dir() + "/d2.rare --metrics " +
                csv2,
            "pre_d2") == 0);
  CHECK(slurp(csv1) == slurp(csv2));
  CHECK(!slurp(csv1).empty());
}

TEST_CASE("RARE_SEED is the seed fallback") {
  const std::string csv1 = work_dir() + "/env1.csv";
  const std::string csv2 = work_dir() + "/env2.csv";
  const std::string base = "pretrain" + kSmallTrain + " --out " + work_dir() + "/env.rare";
  setenv("RARE_SEED", "7", 1);
  CHECK(run(base + " --metrics " + csv1, "pre_env") == 0);
  unsetenv("RARE_SEED");
  CHECK(run(base + " --seed 7 --metrics " + csv2, "pre_env2") == 0);
  CHECK(slurp(csv1) == slurp(csv2));
}

TEST_CASE("embed writes one row per node and respects the checkpoint config") {
  const std::string gdir = work_dir() + "/graph_e";
  CHECK(run("gen-sbm --blocks 15,15 --p-in 0.3 --p-out 0.05 --dim 8 --seed 3 --out " + gdir,
            "gen_e") == 0);
  const std::string ck = work_dir() + "/e.rare";
  CHECK(run("pretrain --graph " + gdir +
                " --hidden 16 --heads 2 --layers 2 --latent-dim 8 --epochs 3 --seed 2 --out " +
                ck + " --metrics " + work_dir() + "/e.csv",
            "pre_e") == 0);
  const std::string emb = work_dir() + "/e_emb.csv";
  CHECK(run("embed --checkpoint " + ck + " --graph " + gdir + " --out " + emb, "embed_e") == 0);
  std::string text = slurp(emb);
  CHECK(count_lines(text) == 30);
  // hidden=16 columns
  std::string first = text.substr(0, text.find('\n'));
  CHECK(std::count(first.begin(), first.end(), ',') == 15);

  SUBCASE("embed output is stable across invocations") {
    const std::string emb2 = work_dir() + "/e_emb2.csv";
    CHECK(run("embed --checkpoint " + ck + " --graph " + gdir + " --out " + emb2, "embed_e2") == 0);
    CHECK(slurp(emb) == slurp(emb2));
  }

  SUBCASE("probe prints mean and std") {
    int rc = run("probe --embeddings " + emb + " --labels " + gdir + "/labels.txt --runs 3 --seed 1",
                 "probe_e");
    CHECK(rc == 0);
    std::string out = slurp(work_dir() + "/probe_e.out");
    CHECK(out.find("accuracy:") != std::string::npos);
    CHECK(out.find("+-") != std::string::npos);
    CHECK(out.find("3 runs") != std::string::npos);
  }

  SUBCASE("probe with --jobs matches single-threaded output") {
    const std::string o1 = work_dir() + "/probe_j1.csv";
    const std::string o2 = work_dir() + "/probe_j4.csv";
    CHECK(run("probe --embeddings " + emb + " --labels " + gdir +
                  "/labels.txt --runs 4 --seed 5 --out " + o1,
              "probe_j1") == 0);
    CHECK(run("probe --embeddings " + emb + " --labels " + gdir +
                  "/labels.txt --runs 4 --seed 5 --jobs 4 --out " + o2,
              "probe_j4") == 0);
    CHECK(slurp(o1) == slurp(o2));
  }
}

TEST_CASE("missing files exit 2") {
  CHECK(run("embed --checkpoint " + work_dir() + "/nope.rare --graph " + work_dir() + "/nope",
            "missing") == 2);
  CHECK(run("probe --embeddings nope.csv --labels nope.txt", "missing2") == 2);
  CHECK(run("pretrain --graph " + work_dir() + "/definitely_absent --epochs 1", "missing3") == 2);
}

TEST_CASE("config file provides defaults and flags override") {
  const std::string cfg_path = work_dir() + "/cfg.json";
  {
    std::ofstream out(cfg_path);
    out << "{\"hidden\":16,\"heads\":2,\"layers\":1,\"latent_dim\":8,\"epochs\":4,"
           "\"seed\":11,\"sbm\":\"10,10\",\"sbm_p_in\":0.4,\"sbm_p_out\":0.05,"
           "\"sbm_dim\":6,\"sbm_shift\":1.0}";
  }
  const std::string csv1 = work_dir() + "/cfg1.csv";
  CHECK(run("pretrain --config " + cfg_path + " --out " + work_dir() + "/cfg1.rare --metrics " +
                csv1,
            "pre_cfg") == 0);
  CHECK(count_lines(slurp(csv1)) == 5);  // epochs 4 from file
  const std::string csv2 = work_dir() + "/cfg2.csv";
  CHECK(run("pretrain --config " + cfg_path + " --epochs 2 --out " + work_dir() +
                "/cfg2.rare --metrics " + csv2,
            "pre_cfg2") == 0);
  CHECK(count_lines(slurp(csv2)) == 3);  // flag wins
}

TEST_CASE("gradcheck passes on a correct build") {
  int rc = run("gradcheck --seed 7", "gradcheck");
  CHECK(rc == 0);
  std::string out = slurp(work_dir() + "/gradcheck.out");
  CHECK(out.find("max relative gradient error") != std::string::npos);
}

TEST_CASE("knn-graph builds a loadable graph from points") {
  const std::string pts = work_dir() + "/points.csv";
  {
    std::ofstream out(pts);
    out << "0.0,0.0\n0.1,0.0\n5.0,5.0\n5.1,5.0\n";
  }
  const std::string gdir = work_dir() + "/knn_g";
  CHECK(run("knn-graph --points " + pts + " --k 1 --out " + gdir, "knn") == 0);
  rare::SparseGraph g = rare::load_graph(gdir);
  CHECK(g.num_nodes() == 4);
  CHECK(g.edges() == std::vector<std::pair<int, int>>{{0, 1}, {2, 3}});

  CHECK(run("knn-graph --points " + pts + " --k 9 --out " + gdir, "knn_bad") == 2);
}

TEST_CASE("robustness emits per-seed trace files") {
  const std::string prefix = work_dir() + "/rob";
  int rc = run("robustness --sbm 20,20 --sbm-p-in 0.3 --sbm-p-out 0.05 --sbm-dim 8"
               " --sbm-shift 1.5 --hidden 16 --heads 2 --layers 1 --latent-dim 8 --epochs 4"
               " --outlier-fraction 0.1 --seeds 1,2 --jobs 2 --out-prefix " +
                   prefix,
               "rob");
  CHECK(rc == 0);
  for (const std::string seed : {"1", "2"}) {
    std::string csv = slurp(prefix + "_seed" + seed + ".csv");
    CHECK(count_lines(csv) == 5);
    CHECK(csv.rfind("iter,L,L_M,L_R,L_R_outlier,L_R_normal,L_M_outlier,L_M_normal\n", 0) == 0);
  }
}

TEST_CASE("graph-classify runs end to end") {
  // build a small labeled dataset: two SBM families
  rare::GraphDataset ds;
  for (int k = 0; k < 8; ++k) {
    ds.graphs.push_back(rare::generate_sbm({6, 6}, k % 2 ? 0.7 : 0.2, 0.1, 6,
                                           k % 2 ? 2.0 : 0.0, 50 + k));
    ds.labels.push_back(k % 2);
  }
  ds.attr_dim = 6;
  const std::string dsdir = work_dir() + "/ds";
  rare::save_dataset(ds, dsdir);

  const std::string ck = work_dir() + "/gc.rare";
  CHECK(run("pretrain --dataset " + dsdir +
                " --batch-size 4 --hidden 16 --heads 2 --layers 1 --latent-dim 8 --epochs 4"
                " --seed 3 --out " +
                ck + " --metrics " + work_dir() + "/gc.csv",
            "pre_gc") == 0);
  int rc = run("graph-classify --checkpoint " + ck + " --dataset " + dsdir +
                   " --pool mean --runs 2 --seed 1",
               "gc");
  CHECK(rc == 0);
  CHECK(slurp(work_dir() + "/gc.out").find("graph classification accuracy:") != std::string::npos);
}

TEST_CASE("f32 precision trains and embeds") {
  const std::string ck = work_dir() + "/f32.rare";
  const std::string csv = work_dir() + "/f32.csv";
  CHECK(run("pretrain" + kSmallTrain + " --precision f32 --seed 4 --out " + ck + " --metrics " +
                csv,
            "pre_f32") == 0);
  const std::string gdir = work_dir() + "/graph_f32";
  CHECK(run("gen-sbm --blocks 20,20 --p-in 0.3 --p-out 0.05 --dim 8 --shift 1.0 --seed 4 --out " +
                gdir,
            "gen_f32") == 0);
  CHECK(run("embed --checkpoint " + ck + " --graph " + gdir + " --out " + work_dir() +
                "/f32_emb.csv",
            "embed_f32") == 0);
}
