#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>

#include "docmap/corpus.hpp"
#include "docmap/pam.hpp"
#include "test_support.hpp"

namespace docmap {
namespace {

using nlohmann::json;
using testing::TempDir;

struct RunResult {
  int exit_code = -1;
  std::string out;
};

// Runs the CLI with stderr discarded; arguments are passed through the shell.
RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + DOCMAP_CLI_PATH + "' " + args + " 2>/dev/null";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    corpus::SynthSpec spec;
    spec.n_docs = 40;
    spec.dim = 16;
    spec.groups = {2};
    spec.filler_max = 12;
    synth_ = corpus::synth_corpus(spec, 5);
    testing::write_file(dir_ / "corpus.csv", corpus::corpus_to_csv(synth_.records));
  }

  std::string embed_store() {
    const auto r = run_cli("--dim 16 --seed 5 embed " + q(dir_ / "corpus.csv") + " -o " + q(dir_ / "store.dmeb"));
    EXPECT_EQ(r.exit_code, 0);
    return q(dir_ / "store.dmeb");
  }

  TempDir dir_{"cli"};
  corpus::SynthCorpus synth_;
};

TEST_F(Cli, EmbedMatchesLibrary) {
  embed_store();
  const auto store = load_store(dir_ / "store.dmeb");
  const auto expected = corpus::embed_corpus(synth_.records, 16, 5);
  ASSERT_EQ(store.size(), expected.size());
  for (std::size_t d = 0; d < store.size(); ++d) EXPECT_EQ(store[d].vectors, expected[d].vectors);
  ASSERT_EQ(run_cli("--dim 16 --seed 5 embed " + q(dir_ / "corpus.csv") + " -o " + q(dir_ / "store.jsonl")).exit_code, 0);
  EXPECT_EQ(load_store_jsonl(dir_ / "store.jsonl")[3].vectors, store[3].vectors);
}

TEST_F(Cli, MapIsByteIdenticalUnderSeed) {
  const auto store = embed_store();
  const std::string args = "--seed 7 map --store " + store + " --embed-seed 5 --prompt '" + synth_.group_prompts[0][0] +
                           "' --prompt 'second prompt' --weights 0.7 --weights 0.3 --epochs 5 -o ";
  ASSERT_EQ(run_cli(args + q(dir_ / "a.json")).exit_code, 0);
  ASSERT_EQ(run_cli(args + q(dir_ / "b.json")).exit_code, 0);
  const auto a = testing::read_file(dir_ / "a.json");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, testing::read_file(dir_ / "b.json"));
  const auto doc = json::parse(a);
  for (const auto* key : {"layout", "cell_colors", "clusters", "layer_gamma", "rpc"}) EXPECT_TRUE(doc.contains(key)) << key;
  EXPECT_EQ(doc["layout"]["assignments"].size(), 40u);

  ASSERT_EQ(run_cli("--seed 8 map --store " + store + " --embed-seed 5 --prompt '" + synth_.group_prompts[0][0] +
                    "' --prompt 'second prompt' --weights 0.7 --weights 0.3 --epochs 5 -o " + q(dir_ / "c.json"))
                .exit_code,
            0);
  EXPECT_NE(a, testing::read_file(dir_ / "c.json"));
}

TEST_F(Cli, TrainWithZeroEpochsWritesInitialisation) {
  std::string jsonl;
  for (const auto& t : synth_.qa) jsonl += json{{"question", t.question}, {"answer", t.answer}, {"context", t.context}}.dump() + "\n";
  testing::write_file(dir_ / "qa.jsonl", jsonl);
  ASSERT_EQ(run_cli("--dim 16 --seed 4 train --qa " + q(dir_ / "qa.jsonl") + " --epochs 0 -o " + q(dir_ / "l0.dmal")).exit_code, 0);
  const auto layer = pam::load_layer(dir_ / "l0.dmal");
  const auto init = pam::AttentionLayer::initialized(16, pam::TrainConfig{}.init_scale, 4);
  EXPECT_EQ(layer.w_q, init.w_q);
  EXPECT_EQ(layer.w_k, init.w_k);

  ASSERT_EQ(run_cli("--dim 16 --seed 4 train --qa " + q(dir_ / "qa.jsonl") + " --epochs 2 -o " + q(dir_ / "l2.dmal") +
                    " --store-out " + q(dir_ / "ctx.dmeb"))
                .exit_code,
            0);
  EXPECT_NE(pam::load_layer(dir_ / "l2.dmal").w_q, init.w_q);
  EXPECT_EQ(load_store(dir_ / "ctx.dmeb").size(), 40u);
}

TEST_F(Cli, TopicsReportsStability) {
  const auto store = embed_store();
  const auto r = run_cli("map --store " + store + " --embed-seed 5 --prompt '" + synth_.system_prompts[0] + "' --epochs 2");
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_TRUE(json::parse(r.out).contains("layout"));
  const auto t = run_cli("topics --store " + store + " --embed-seed 5 --prompt '" + synth_.system_prompts[0] + "' --k-max 4");
  ASSERT_EQ(t.exit_code, 0);
  const auto doc = json::parse(t.out);
  EXPECT_GE(doc["k"].get<int>(), 1);
  EXPECT_EQ(doc["stability"].size(), 4u);
  EXPECT_TRUE(doc.contains("reconstruction_error"));
}

TEST_F(Cli, ErrorsExitNonZero) {
  EXPECT_NE(run_cli("").exit_code, 0);
  EXPECT_EQ(run_cli("embed /nonexistent.csv -o " + q(dir_ / "x.dmeb")).exit_code, 1);
  EXPECT_NE(run_cli("map --store " + q(dir_ / "missing.dmeb") + " --prompt x").exit_code, 0);
  EXPECT_NE(run_cli("train --epochs 0 -o " + q(dir_ / "x.dmal")).exit_code, 0);
  const auto store = embed_store();
  EXPECT_EQ(run_cli("map --store " + store + " --prompt a --prompt b --weights 0.6 --weights 0.6").exit_code, 1);
}

TEST_F(Cli, EvalDigitsSingleConfiguration) {
  const auto r = run_cli("eval-digits --omega-s 1 --omega-r 0 --epochs 2 --json " + q(dir_ / "digits.json"));
  ASSERT_EQ(r.exit_code, 0);
  EXPECT_NE(r.out.find("silhouette"), std::string::npos);
  EXPECT_NE(r.out.find("rpc"), std::string::npos);
  const auto doc = json::parse(testing::read_file(dir_ / "digits.json"));
  ASSERT_EQ(doc["runs"].size(), 1u);
  EXPECT_EQ(doc["samples"], 1797);
  EXPECT_TRUE(doc["runs"][0].contains("silhouette"));
}

}  // namespace
}  // namespace docmap
