#pragma once
#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqlab/errors.hpp"

namespace seqlab {

// ---- text cleaning -----------------------------------------------------------

inline bool utf8_valid(std::string_view s) {
    size_t i = 0;
    const auto n = s.size();
    while (i < n) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        size_t len;
        uint32_t cp;
        if (b0 < 0x80) { ++i; continue; }
        else if ((b0 & 0xE0) == 0xC0) { len = 2; cp = b0 & 0x1Fu; }
        else if ((b0 & 0xF0) == 0xE0) { len = 3; cp = b0 & 0x0Fu; }
        else if ((b0 & 0xF8) == 0xF0) { len = 4; cp = b0 & 0x07u; }
        else return false;
        if (i + len > n) return false;
        for (size_t k = 1; k < len; ++k) {
            const auto bk = static_cast<unsigned char>(s[i + k]);
            if ((bk & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (bk & 0x3Fu);
        }
        if (len == 2 && cp < 0x80) return false;        // overlong
        if (len == 3 && cp < 0x800) return false;
        if (len == 4 && cp < 0x10000) return false;
        if (cp >= 0xD800 && cp <= 0xDFFF) return false;  // surrogate
        if (cp > 0x10FFFF) return false;
        i += len;
    }
    return true;
}

namespace detail {

inline std::string normalize_newlines(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

inline std::string collapse_blank_lines(const std::string& s) {
    std::vector<std::string_view> lines;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == '\n') {
            lines.emplace_back(s.data() + start, i - start);
            start = i + 1;
        }
    }
    std::string out;
    out.reserve(s.size());
    int blanks = 0;
    bool first = true;
    for (const auto& line : lines) {
        blanks = line.empty() ? blanks + 1 : 0;
        if (blanks > 2) continue;
        if (!first) out.push_back('\n');
        out.append(line);
        first = false;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

}  // namespace detail

// Normalizes line endings, strips license boilerplate when the conventional
// "*** START ... ***" / "*** END" markers are present, and collapses runs of
// more than two blank lines down to two.
inline std::string clean_text(std::string_view raw) {
    if (!utf8_valid(raw)) throw EncodingError("input text is not valid UTF-8");
    std::string text = detail::normalize_newlines(raw);
    const size_t start_marker = text.find("*** START");
    if (start_marker != std::string::npos) {
        const size_t close = text.find("***", start_marker + 9);
        if (close != std::string::npos) {
            size_t body_begin = close + 3;
            size_t body_end = text.find("*** END", body_begin);
            if (body_end == std::string::npos) body_end = text.size();
            text = std::string(
                detail::trim(std::string_view(text).substr(body_begin, body_end - body_begin)));
        }
    }
    return detail::collapse_blank_lines(text);
}

// ---- vocabulary ----------------------------------------------------------------

// Byte-level BPE vocabulary: ids 0..255 are the single bytes, id 256 is the
// document marker, and every further id is a merge of two earlier tokens.
struct Vocab {
    static constexpr int32_t kNumSpecials = 1;
    static constexpr int32_t kDocId = 256;
    static constexpr const char* kDocMarker = "<|doc|>";

    std::vector<std::string> id_to_token;
    std::unordered_map<std::string, int32_t> token_to_id;
    std::vector<std::pair<std::string, std::string>> merges;

    int64_t u() const { return static_cast<int64_t>(id_to_token.size()); }

    static Vocab base() {
        Vocab v;
        v.id_to_token.reserve(256 + kNumSpecials);
        for (int b = 0; b < 256; ++b) v.id_to_token.emplace_back(1, static_cast<char>(b));
        v.id_to_token.emplace_back(kDocMarker);
        for (size_t i = 0; i < v.id_to_token.size(); ++i)
            v.token_to_id.emplace(v.id_to_token[i], static_cast<int32_t>(i));
        return v;
    }

    // by value: callers pass references into id_to_token, which push_back may
    // reallocate
    int32_t add_merge(std::string left, std::string right) {
        const auto id = static_cast<int32_t>(id_to_token.size());
        id_to_token.push_back(left + right);
        token_to_id.emplace(id_to_token.back(), id);
        merges.emplace_back(std::move(left), std::move(right));
        return id;
    }
};

namespace detail {

// Maximal runs of whitespace / non-whitespace; merges never cross them.
inline std::vector<std::string_view> pretokenize(std::string_view text) {
    auto is_space = [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    };
    std::vector<std::string_view> out;
    size_t i = 0;
    while (i < text.size()) {
        const bool space = is_space(text[i]);
        size_t j = i + 1;
        while (j < text.size() && is_space(text[j]) == space) ++j;
        out.push_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

struct PairHash {
    size_t operator()(const std::pair<int32_t, int32_t>& p) const {
        return std::hash<uint64_t>()((static_cast<uint64_t>(static_cast<uint32_t>(p.first)) << 32) |
                                     static_cast<uint32_t>(p.second));
    }
};

}  // namespace detail

// Trains merges on the corpus until the vocabulary reaches `target_u` or no
// adjacent pair occurs twice. Pair frequency counts every adjacent
// occurrence; ties go to the pair occurring earliest in the corpus (then
// lexicographically smaller, as a documented fallback). `merge_counts`, when
// given, receives the winning count of each merge in order.
inline Vocab bpe_train(const std::vector<std::string>& docs, int64_t target_u,
                       std::vector<int64_t>* merge_counts = nullptr) {
    if (target_u < 256 + Vocab::kNumSpecials)
        throw ConfigError("vocabulary size " + std::to_string(target_u) +
                          " cannot hold the 256 byte tokens plus specials");
    if (docs.empty()) throw DataError("bpe_train: empty corpus");

    Vocab vocab = Vocab::base();

    // Unique pre-tokens with corpus frequency, kept in first-occurrence order.
    struct Word {
        std::vector<int32_t> syms;
        int64_t freq = 0;
    };
    std::vector<Word> words;
    {
        std::unordered_map<std::string_view, size_t> seen;
        for (const auto& doc : docs) {
            for (std::string_view pre : detail::pretokenize(doc)) {
                auto it = seen.find(pre);
                if (it == seen.end()) {
                    Word w;
                    w.syms.reserve(pre.size());
                    for (char c : pre) w.syms.push_back(static_cast<unsigned char>(c));
                    w.freq = 1;
                    seen.emplace(pre, words.size());
                    words.push_back(std::move(w));
                } else {
                    ++words[it->second].freq;
                }
            }
        }
    }

    using Pair = std::pair<int32_t, int32_t>;
    std::unordered_map<Pair, int64_t, detail::PairHash> counts;
    for (const auto& w : words)
        for (size_t i = 0; i + 1 < w.syms.size(); ++i)
            counts[{w.syms[i], w.syms[i + 1]}] += w.freq;

    bool stopped_early = false;
    while (vocab.u() < target_u) {
        int64_t best = 0;
        for (const auto& [pair, cnt] : counts) best = std::max(best, cnt);
        if (best < 2) {
            stopped_early = true;
            break;
        }
        std::vector<Pair> tied;
        for (const auto& [pair, cnt] : counts)
            if (cnt == best) tied.push_back(pair);
        Pair winner = tied.front();
        if (tied.size() > 1) {
            // earliest current occurrence in first-occurrence word order
            bool found = false;
            std::sort(tied.begin(), tied.end());  // lexicographic id fallback baseline
            for (const auto& w : words) {
                for (size_t i = 0; i + 1 < w.syms.size() && !found; ++i) {
                    const Pair here{w.syms[i], w.syms[i + 1]};
                    if (std::find(tied.begin(), tied.end(), here) != tied.end()) {
                        winner = here;
                        found = true;
                    }
                }
                if (found) break;
            }
            if (!found) {
                // unreachable for counted pairs; lexicographic token-bytes order
                winner = *std::min_element(tied.begin(), tied.end(), [&](const Pair& a, const Pair& b) {
                    return std::make_pair(vocab.id_to_token[static_cast<size_t>(a.first)],
                                          vocab.id_to_token[static_cast<size_t>(a.second)]) <
                           std::make_pair(vocab.id_to_token[static_cast<size_t>(b.first)],
                                          vocab.id_to_token[static_cast<size_t>(b.second)]);
                });
            }
        }
        if (merge_counts) merge_counts->push_back(best);
        const int32_t merged = vocab.add_merge(vocab.id_to_token[static_cast<size_t>(winner.first)],
                                               vocab.id_to_token[static_cast<size_t>(winner.second)]);

        // Apply the merge greedily left-to-right; count bookkeeping is done by
        // subtracting each touched word's old adjacent pairs and adding its
        // new ones.
        for (auto& w : words) {
            auto& s = w.syms;
            bool contains = false;
            for (size_t i = 0; i + 1 < s.size(); ++i)
                if (s[i] == winner.first && s[i + 1] == winner.second) {
                    contains = true;
                    break;
                }
            if (!contains) continue;
            for (size_t i = 0; i + 1 < s.size(); ++i) counts[{s[i], s[i + 1]}] -= w.freq;
            size_t write = 0;
            for (size_t read = 0; read < s.size();) {
                if (read + 1 < s.size() && s[read] == winner.first && s[read + 1] == winner.second) {
                    s[write++] = merged;
                    read += 2;
                } else {
                    s[write++] = s[read++];
                }
            }
            s.resize(write);
            for (size_t i = 0; i + 1 < s.size(); ++i) counts[{s[i], s[i + 1]}] += w.freq;
        }
        for (auto it = counts.begin(); it != counts.end();) {
            it = it->second <= 0 ? counts.erase(it) : std::next(it);
        }
    }
    if (stopped_early && vocab.u() < target_u)
        std::cerr << "bpe_train: no pair repeats; stopping at vocabulary size " << vocab.u()
                  << " instead of " << target_u << "\n";
    return vocab;
}

// ---- encode / decode -----------------------------------------------------------

class Encoder {
  public:
    explicit Encoder(const Vocab& vocab) : vocab_(&vocab) {
        for (size_t r = 0; r < vocab.merges.size(); ++r) {
            const auto& [left, right] = vocab.merges[r];
            const int32_t a = vocab.token_to_id.at(left);
            const int32_t b = vocab.token_to_id.at(right);
            const int32_t merged = vocab.token_to_id.at(left + right);
            ranks_.emplace(std::make_pair(a, b), std::make_pair(static_cast<int32_t>(r), merged));
        }
    }

    std::vector<int32_t> encode(std::string_view text) const {
        std::vector<int32_t> out;
        for (std::string_view pre : detail::pretokenize(text)) {
            auto it = cache_.find(std::string(pre));
            if (it == cache_.end())
                it = cache_.emplace(std::string(pre), encode_word(pre)).first;
            out.insert(out.end(), it->second.begin(), it->second.end());
        }
        return out;
    }

  private:
    // Repeatedly applies the lowest-ranked merge present, left-to-right and
    // non-overlapping; reproduces the training-time tokenization.
    std::vector<int32_t> encode_word(std::string_view pre) const {
        std::vector<int32_t> syms;
        syms.reserve(pre.size());
        for (char c : pre) syms.push_back(static_cast<unsigned char>(c));
        while (syms.size() >= 2) {
            int32_t best_rank = -1;
            std::pair<int32_t, int32_t> best_pair{0, 0};
            int32_t best_merged = 0;
            for (size_t i = 0; i + 1 < syms.size(); ++i) {
                auto it = ranks_.find({syms[i], syms[i + 1]});
                if (it != ranks_.end() && (best_rank < 0 || it->second.first < best_rank)) {
                    best_rank = it->second.first;
                    best_pair = it->first;
                    best_merged = it->second.second;
                }
            }
            if (best_rank < 0) break;
            size_t write = 0;
            for (size_t read = 0; read < syms.size();) {
                if (read + 1 < syms.size() && syms[read] == best_pair.first &&
                    syms[read + 1] == best_pair.second) {
                    syms[write++] = best_merged;
                    read += 2;
                } else {
                    syms[write++] = syms[read++];
                }
            }
            syms.resize(write);
        }
        return syms;
    }

    const Vocab* vocab_;
    std::unordered_map<std::pair<int32_t, int32_t>, std::pair<int32_t, int32_t>, detail::PairHash> ranks_;
    mutable std::unordered_map<std::string, std::vector<int32_t>> cache_;
};

inline std::vector<int32_t> encode(std::string_view text, const Vocab& vocab) {
    return Encoder(vocab).encode(text);
}

inline std::string decode(const std::vector<int32_t>& ids, const Vocab& vocab) {
    std::string out;
    for (int32_t id : ids) {
        if (id < 0 || id >= vocab.u())
            throw VocabError("decode: id " + std::to_string(id) + " outside vocabulary of " +
                             std::to_string(vocab.u()));
        out += vocab.id_to_token[static_cast<size_t>(id)];
    }
    return out;
}

// ---- vocabulary file -----------------------------------------------------------
// Text format: a header line, then one merge per line as two space-separated
// byte-escaped tokens. Printable ASCII except space and backslash is literal;
// everything else is \xHH.

namespace detail {

inline std::string escape_token(const std::string& tok) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned char c : tok) {
        if (c > 0x20 && c < 0x7F && c != '\\') {
            out.push_back(static_cast<char>(c));
        } else {
            out += "\\x";
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        }
    }
    return out;
}

inline std::string unescape_token(std::string_view s) {
    std::string out;
    for (size_t i = 0; i < s.size();) {
        if (s[i] == '\\') {
            if (i + 3 >= s.size() || s[i + 1] != 'x')
                throw DataError("vocab file: bad escape in token");
            const auto hexval = [](char c) -> int {
                if (c >= '0' && c <= '9') return c - '0';
                if (c >= 'a' && c <= 'f') return c - 'a' + 10;
                if (c >= 'A' && c <= 'F') return c - 'A' + 10;
                throw DataError("vocab file: bad hex digit");
            };
            out.push_back(static_cast<char>(hexval(s[i + 2]) * 16 + hexval(s[i + 3])));
            i += 4;
        } else {
            out.push_back(s[i++]);
        }
    }
    return out;
}

}  // namespace detail

inline void save_vocab(const std::string& path, const Vocab& vocab) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw DataError("cannot write vocab file '" + path + "'");
        os << "seqlab-vocab v1 u=" << vocab.u() << " specials=" << Vocab::kNumSpecials << "\n";
        for (const auto& [left, right] : vocab.merges)
            os << detail::escape_token(left) << " " << detail::escape_token(right) << "\n";
        if (!os) throw DataError("vocab write failed for '" + path + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline Vocab load_vocab(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open vocab file '" + path + "'");
    std::string header;
    std::getline(is, header);
    int64_t u = -1;
    int specials = -1;
    if (std::sscanf(header.c_str(), "seqlab-vocab v1 u=%ld specials=%d", &u, &specials) != 2 ||
        specials != Vocab::kNumSpecials)
        throw DataError("'" + path + "' is not a seqlab vocab file");
    Vocab vocab = Vocab::base();
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const size_t sep = line.find(' ');
        if (sep == std::string::npos) throw DataError("vocab file: malformed merge line");
        const std::string left = detail::unescape_token(std::string_view(line).substr(0, sep));
        const std::string right = detail::unescape_token(std::string_view(line).substr(sep + 1));
        if (!vocab.token_to_id.count(left) || !vocab.token_to_id.count(right))
            throw DataError("vocab file: merge references unknown token");
        vocab.add_merge(left, right);
    }
    if (vocab.u() != u) throw DataError("vocab file: header promises u=" + std::to_string(u) +
                                        " but holds " + std::to_string(vocab.u()) + " tokens");
    return vocab;
}

// ---- token stream cache ----------------------------------------------------------

namespace detail {
constexpr char kTokensMagic[8] = {'S', 'L', 'T', 'O', 'K', 'S', '0', '1'};
}

inline void save_tokens(const std::string& path, const std::vector<int32_t>& ids) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw DataError("cannot write token cache '" + path + "'");
        os.write(detail::kTokensMagic, 8);
        for (int32_t id : ids) {
            unsigned char b[4] = {static_cast<unsigned char>(id), static_cast<unsigned char>(id >> 8),
                                  static_cast<unsigned char>(id >> 16),
                                  static_cast<unsigned char>(id >> 24)};
            os.write(reinterpret_cast<const char*>(b), 4);
        }
        if (!os) throw DataError("token cache write failed for '" + path + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::vector<int32_t> load_tokens(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open token cache '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kTokensMagic, 8) != 0)
        throw DataError("'" + path + "' is not a token cache file");
    std::vector<int32_t> ids;
    unsigned char b[4];
    while (is.read(reinterpret_cast<char*>(b), 4))
        ids.push_back(static_cast<int32_t>(b[0] | (b[1] << 8) | (b[2] << 16) |
                                           (static_cast<uint32_t>(b[3]) << 24)));
    return ids;
}

// ---- corpus --------------------------------------------------------------------

struct Corpus {
    std::vector<std::string> documents;
    std::vector<int32_t> token_stream;
};

// Reads and cleans every .txt under `dir`, sorted by filename.
inline std::vector<std::string> load_corpus_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("corpus directory '" + dir + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .txt files in corpus directory '" + dir + "'");
    std::vector<std::string> docs;
    for (const auto& f : files) {
        std::ifstream is(f, std::ios::binary);
        std::ostringstream buf;
        buf << is.rdbuf();
        docs.push_back(clean_text(buf.str()));
    }
    return docs;
}

// Token stream: a document marker, then the document's tokens, per document.
inline std::vector<int32_t> encode_corpus(const std::vector<std::string>& docs, const Vocab& vocab) {
    Encoder enc(vocab);
    std::vector<int32_t> stream;
    for (const auto& doc : docs) {
        stream.push_back(Vocab::kDocId);
        const auto ids = enc.encode(doc);
        stream.insert(stream.end(), ids.begin(), ids.end());
    }
    return stream;
}

inline int64_t count_specials(const std::vector<int32_t>& stream) {
    int64_t n = 0;
    for (int32_t id : stream)
        if (id == Vocab::kDocId) ++n;
    return n;
}

}  // namespace seqlab
