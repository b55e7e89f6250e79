// Command-line entry point: data preparation, tokenizer training, model
// training, text generation, and complexity reports.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "seqlab/complexity.hpp"
#include "seqlab/generation.hpp"
#include "seqlab/nn.hpp"
#include "seqlab/params.hpp"
#include "seqlab/runfile.hpp"
#include "seqlab/tokenizer.hpp"
#include "seqlab/training.hpp"

namespace fs = std::filesystem;
using namespace seqlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitData = 4;
constexpr int kExitNumeric = 5;

int exit_code_for(const Error& e) {
    if (e.category == "numeric") return kExitNumeric;
    if (e.category == "data" || e.category == "vocab" || e.category == "encoding") return kExitData;
    return kExitConfig;  // config, dimension, contract, index, context_overflow
}

void atomic_write(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw DataError("cannot write '" + path + "'");
        os << contents;
        if (!os) throw DataError("write failed for '" + path + "'");
    }
    fs::rename(tmp, path);
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

// ---- prepare-data ----------------------------------------------------------

int cmd_prepare_data(const std::string& in_dir, const std::string& out_dir) {
    if (!fs::is_directory(in_dir)) throw DataError("input directory '" + in_dir + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(in_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .txt files in '" + in_dir + "'");
    fs::create_directories(out_dir);
    size_t total_bytes = 0;
    for (const auto& f : files) {
        const std::string cleaned = clean_text(read_file(f.string()));
        atomic_write((fs::path(out_dir) / f.filename()).string(), cleaned);
        total_bytes += cleaned.size();
    }
    std::cout << "prepared " << files.size() << " documents, " << total_bytes << " bytes -> " << out_dir
              << "\n";
    return kExitOk;
}

// ---- train-tokenizer --------------------------------------------------------

int cmd_train_tokenizer(const std::string& corpus_dir, int64_t u, const std::string& out_vocab,
                        const std::string& out_tokens) {
    const std::vector<std::string> docs = load_corpus_dir(corpus_dir);
    Vocab vocab = bpe_train(docs, u);
    save_vocab(out_vocab, vocab);
    std::cout << "vocabulary: " << vocab.u() << " tokens (" << vocab.merges.size() << " merges) -> "
              << out_vocab << "\n";
    if (!out_tokens.empty()) {
        const std::vector<int32_t> stream = encode_corpus(docs, vocab);
        save_tokens(out_tokens, stream);
        const int64_t specials = count_specials(stream);
        std::cout << "token stream: " << stream.size() << " tokens with specials, "
                  << (static_cast<int64_t>(stream.size()) - specials) << " without -> " << out_tokens
                  << "\n";
    }
    return kExitOk;
}

// ---- train -------------------------------------------------------------------

std::vector<int32_t> resolve_stream(const RunFile& rf, const Vocab** vocab_out, Vocab& vocab_storage) {
    if (rf.has("tokens")) return load_tokens(rf.get_string("tokens"));
    if (rf.has("corpus") && rf.has("vocab")) {
        vocab_storage = load_vocab(rf.get_string("vocab"));
        if (vocab_out) *vocab_out = &vocab_storage;
        return encode_corpus(load_corpus_dir(rf.get_string("corpus")), vocab_storage);
    }
    throw ConfigError("run file needs either 'tokens' or both 'corpus' and 'vocab'");
}

int cmd_train(const std::string& config_path, const std::string& sublayer_override, int64_t seed_override,
              int64_t heads_override) {
    RunFile rf = RunFile::load(config_path);
    if (!sublayer_override.empty()) rf.set("sublayer", sublayer_override);
    if (seed_override >= 0) rf.set_u64("seed", static_cast<uint64_t>(seed_override));
    if (heads_override > 0) rf.set_int("n", heads_override);
    TrainConfig tc = rf.to_train_config();

    Vocab vocab_storage;
    const Vocab* vocab = nullptr;
    const std::vector<int32_t> stream = resolve_stream(rf, &vocab, vocab_storage);
    if (vocab && vocab->u() != tc.model.u)
        throw ConfigError("model u = " + std::to_string(tc.model.u) + " but vocabulary has " +
                          std::to_string(vocab->u()) + " tokens");
    for (int32_t id : stream)
        if (id < 0 || id >= tc.model.u)
            throw VocabError("token stream contains id " + std::to_string(id) +
                             " outside the model vocabulary");

    const uint64_t corpus_hash = fnv1a64(stream.data(), stream.size() * sizeof(int32_t));
    if (rf.has("corpus_hash")) {
        char want[32];
        std::snprintf(want, sizeof want, "%016llx", static_cast<unsigned long long>(corpus_hash));
        if (rf.get_string("corpus_hash") != want)
            throw DataError("corpus hash mismatch: manifest has " + rf.get_string("corpus_hash") +
                            ", stream is " + want);
    }

    TrainResult result = train(tc, stream, [&](int64_t batch, double cost) {
        if (batch % 100 == 0 || batch == tc.num_batches)
            std::cout << "batch " << batch << "/" << tc.num_batches << " cost " << cost << "\n";
    });

    write_cost_log(tc.log_path, result.cost_log);
    write_batch_hashes(tc.log_path + ".batches.csv", result.batch_hashes);

    const std::string ckpt_path = rf.has("checkpoint") ? rf.get_string("checkpoint")
                                                       : tc.log_path + ".ckpt";
    save_checkpoint(ckpt_path, tc.model, result.params);

    RunFile manifest = RunFile::from_train_config(tc);
    if (rf.has("corpus")) manifest.set("corpus", rf.get_string("corpus"));
    if (rf.has("vocab")) manifest.set("vocab", rf.get_string("vocab"));
    if (rf.has("tokens")) manifest.set("tokens", rf.get_string("tokens"));
    manifest.set("checkpoint", ckpt_path);
    char hash_hex[32];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx", static_cast<unsigned long long>(corpus_hash));
    manifest.set("corpus_hash", hash_hex);
    manifest.set("code_version", kCodeVersion);
    manifest.save(tc.log_path + ".manifest");

    if (!result.cost_log.entries.empty()) {
        const double final_cost = result.cost_log.entries.back().second;
        std::cout << "final cost " << final_cost << " (perplexity " << std::exp(final_cost) << ")\n";
    }
    std::cout << "cost log -> " << tc.log_path << "\ncheckpoint -> " << ckpt_path << "\nmanifest -> "
              << tc.log_path << ".manifest\n";
    return kExitOk;
}

// ---- generate ------------------------------------------------------------------

int cmd_generate(const std::string& ckpt_path, const std::string& vocab_path, const std::string& prompt,
                 int64_t n_tokens, double top_p, int64_t top_k, bool greedy, uint64_t seed,
                 const std::string& transcript_path) {
    auto [cfg, params] = load_checkpoint(ckpt_path);
    const Vocab vocab = load_vocab(vocab_path);
    SamplerSpec sampler = SamplerSpec::nucleus(top_p, seed);
    if (greedy) sampler = SamplerSpec::greedy_pick();
    else if (top_k > 0) sampler = SamplerSpec::top_k_of(top_k, seed);

    std::vector<GenerationStep> transcript;
    const std::string text = generate(cfg, params, vocab, prompt, n_tokens, sampler,
                                      transcript_path.empty() ? nullptr : &transcript);
    std::cout << text << "\n";
    if (!transcript_path.empty()) {
        std::string csv = "step,token_id,nucleus_size\n";
        for (const auto& s : transcript)
            csv += std::to_string(s.step) + "," + std::to_string(s.token_id) + "," +
                   std::to_string(s.set_size) + "\n";
        atomic_write(transcript_path, csv);
    }
    return kExitOk;
}

// ---- complexity ---------------------------------------------------------------

int cmd_complexity(bool table7, bool grid, const std::string& kind_str,
                   const std::string& phase_str, int64_t d, int64_t l, int64_t n) {
    if (table7) {
        std::cout << table7_report();
        return kExitOk;
    }
    std::vector<OpCountReport> rows;
    if (grid) {
        const SublayerKind kinds[] = {SublayerKind::attention, SublayerKind::she, SublayerKind::he,
                                      SublayerKind::we, SublayerKind::me};
        for (SublayerKind kind : kinds)
            for (Phase phase : {Phase::training, Phase::inference})
                for (int64_t gd : {2, 4, 8})
                    for (int64_t gl : {1, 2, 4, 8}) {
                        if (kind == SublayerKind::attention) {
                            for (int64_t gn = 1; gn <= gd; ++gn)
                                if (gd % gn == 0) rows.push_back(analytic_counts(kind, phase, gd, gl, gn));
                        } else {
                            rows.push_back(analytic_counts(kind, phase, gd, gl));
                        }
                    }
    } else {
        if (kind_str.empty()) throw ConfigError("complexity needs --table7, --grid, or --kind");
        const SublayerKind kind = sublayer_kind_from(kind_str);
        const Phase phase = phase_str == "inference" ? Phase::inference : Phase::training;
        rows.push_back(analytic_counts(kind, phase, d, l, n));
    }
    std::cout << counts_csv_header() << "\n";
    for (const auto& r : rows) std::cout << counts_csv_row(r) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sequence-modeling lab: swappable token mixers over a decoder-only stack"};
    app.require_subcommand(1);

    auto* prep = app.add_subcommand("prepare-data", "clean raw .txt books into a corpus directory");
    std::string prep_in, prep_out;
    prep->add_option("--in", prep_in, "directory of raw .txt files")->required();
    prep->add_option("--out", prep_out, "directory for cleaned .txt files")->required();

    auto* toksub = app.add_subcommand("train-tokenizer", "train a byte-level BPE vocabulary");
    std::string tok_corpus, tok_vocab, tok_tokens;
    int64_t tok_u = 512;
    toksub->add_option("--corpus", tok_corpus, "cleaned corpus directory")->required();
    toksub->add_option("--u", tok_u, "vocabulary size")->required();
    toksub->add_option("--out", tok_vocab, "vocabulary file to write")->required();
    toksub->add_option("--tokens", tok_tokens, "also encode the corpus into this token cache");

    auto* trainsub = app.add_subcommand("train", "train a model from a run file");
    std::string train_config, train_sublayer;
    int64_t train_seed = -1, train_heads = 0;
    trainsub->add_option("--config", train_config, "run file")->required();
    trainsub->add_option("--sublayer", train_sublayer, "override: attention|she|he|we|me");
    trainsub->add_option("--seed", train_seed, "override the run file seed");
    trainsub->add_option("--heads", train_heads, "override the attention head count");

    auto* gensub = app.add_subcommand("generate", "generate text from a checkpoint");
    std::string gen_ckpt, gen_vocab, gen_prompt, gen_transcript;
    int64_t gen_tokens = 64, gen_top_k = 0;
    double gen_top_p = 0.6;
    bool gen_greedy = false;
    uint64_t gen_seed = 0;
    gensub->add_option("--checkpoint", gen_ckpt, "checkpoint file")->required();
    gensub->add_option("--vocab", gen_vocab, "vocabulary file")->required();
    gensub->add_option("--prompt", gen_prompt, "prompt text");
    gensub->add_option("--tokens", gen_tokens, "number of tokens to generate");
    gensub->add_option("--top-p", gen_top_p, "nucleus sampling mass (default 0.6)");
    gensub->add_option("--top-k", gen_top_k, "top-k sampling instead of top-p");
    gensub->add_flag("--greedy", gen_greedy, "greedy decoding");
    gensub->add_option("--seed", gen_seed, "sampling seed");
    gensub->add_option("--transcript", gen_transcript, "per-step CSV (step,token_id,nucleus_size)");

    auto* compsub = app.add_subcommand("complexity", "operation/parameter count reports");
    bool comp_table7 = false, comp_grid = false;
    std::string comp_kind, comp_phase = "training";
    int64_t comp_d = 128, comp_l = 128, comp_n = 1;
    compsub->add_flag("--table7", comp_table7, "reproduce the d=128, l=128 training table");
    compsub->add_flag("--grid", comp_grid, "CSV counts over the small verification grid");
    compsub->add_option("--kind", comp_kind, "attention|she|he|we|me");
    compsub->add_option("--phase", comp_phase, "training|inference");
    compsub->add_option("--d", comp_d, "model dimension");
    compsub->add_option("--l", comp_l, "context length (training) or t (inference)");
    compsub->add_option("--heads", comp_n, "attention head count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*prep) return cmd_prepare_data(prep_in, prep_out);
        if (*toksub) return cmd_train_tokenizer(tok_corpus, tok_u, tok_vocab, tok_tokens);
        if (*trainsub) return cmd_train(train_config, train_sublayer, train_seed, train_heads);
        if (*gensub)
            return cmd_generate(gen_ckpt, gen_vocab, gen_prompt, gen_tokens, gen_top_p, gen_top_k,
                                gen_greedy, gen_seed, gen_transcript);
        if (*compsub)
            return cmd_complexity(comp_table7, comp_grid, comp_kind, comp_phase, comp_d, comp_l,
                                  comp_n);
    } catch (const Error& e) {
        std::cerr << "error: " << e.category << ": " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitUsage;
}
