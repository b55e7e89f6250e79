// Deterministic story-text generator for the desk-scale fixture corpus.
// Running it with the default seed reproduces data/fixture exactly.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "seqlab/rng.hpp"

using seqlab::PrngState;
using seqlab::Stream;

namespace {

struct Lex {
    std::vector<std::string> names{"Marra",  "Tilda",  "Finn",   "Oban",   "Petra",  "Sorrel",
                                   "Bramble","Elka",   "Galen",  "Hesper", "Ivo",    "Juniper",
                                   "Kip",    "Linnea", "Moss",   "Nim",    "Orla",   "Piper"};
    std::vector<std::string> creatures{"fox",    "owl",   "badger", "hare",   "hedgehog", "wren",
                                       "otter",  "mole",  "magpie", "squirrel", "toad",   "heron"};
    std::vector<std::string> places{"the mill",      "the orchard",   "the harbor",  "the old bridge",
                                    "the birch wood", "the meadow",   "the well",    "the market square",
                                    "the lighthouse", "the mossy glen", "the barn",  "the riverbank"};
    std::vector<std::string> objects{"lantern", "acorn",  "ribbon", "basket",  "whistle", "map",
                                     "locket",  "ladder", "kettle", "blanket", "spindle", "compass"};
    std::vector<std::string> adjectives{"little",  "brave",   "curious", "sleepy", "cheerful", "quiet",
                                        "clever",  "gentle",  "stubborn", "merry", "patient",  "shy"};
    std::vector<std::string> weather{"a soft rain",  "the first snow", "a warm wind", "a silver fog",
                                     "bright sunshine", "a rolling thunder", "falling leaves"};
    std::vector<std::string> moods{"glad", "worried", "proud", "amazed", "sorry", "hopeful"};
    std::vector<std::string> verbs_went{"walked", "hurried", "wandered", "crept", "skipped", "marched"};
    std::vector<std::string> times{"One morning", "That evening", "At noon", "Before dawn",
                                   "After supper", "On the seventh day", "In the deep of winter"};
    std::vector<std::string> sayings{"All will be well",
                                     "A small kindness is never wasted",
                                     "The longest road begins at the doorstep",
                                     "Even the moon must rest",
                                     "What is lost may yet be found"};
};

class StoryWriter {
  public:
    StoryWriter(uint64_t seed, const Lex& lex) : rng_(seed, Stream::sampling), lex_(lex) {}

    std::string book(int index, int target_paragraphs) {
        hero_ = pick(lex_.names);
        friend_name_ = pick(lex_.names);
        while (friend_name_ == hero_) friend_name_ = pick(lex_.names);
        creature_ = pick(lex_.creatures);
        home_ = pick(lex_.places);
        treasure_ = pick(lex_.objects);

        std::string out;
        out += "THE TALE OF " + upper(hero_) + " AND THE " + upper(treasure_) + "\n\n";
        for (int p = 0; p < target_paragraphs; ++p) {
            out += paragraph();
            out += "\n\n";
            if (p % 9 == 8) out += "* * *\n\n";
        }
        out += "And that is the whole of the tale of " + hero_ + ", told as it was told to me.\n";
        (void)index;
        return out;
    }

  private:
    std::string paragraph() {
        const int n = 3 + static_cast<int>(rng_.next_index(4));
        std::string out;
        for (int i = 0; i < n; ++i) {
            if (i) out += " ";
            out += sentence();
        }
        return out;
    }

    std::string sentence() {
        switch (rng_.next_index(10)) {
            case 0:
                return pick(lex_.times) + ", " + hero_ + " " + pick(lex_.verbs_went) + " to " +
                       pick(lex_.places) + " with the " + pick(lex_.adjectives) + " " + creature_ + ".";
            case 1:
                return "The " + creature_ + " looked at the " + treasure_ + " and felt " +
                       pick(lex_.moods) + ".";
            case 2:
                return "\"" + pick(lex_.sayings) + ",\" said " + friend_name_ + ", \"and you must carry the " +
                       treasure_ + " to " + pick(lex_.places) + ".\"";
            case 3:
                return hero_ + " remembered what " + friend_name_ + " had said about " +
                       pick(lex_.weather) + " and hid the " + treasure_ + " under a " +
                       pick(lex_.adjectives) + " " + pick(lex_.objects) + ".";
            case 4:
                return "Under " + pick(lex_.weather) + ", " + home_ + " seemed very " +
                       pick(lex_.adjectives) + " indeed.";
            case 5:
                return "\"Where is my " + treasure_ + "?\" asked " + hero_ + ", and the " + creature_ +
                       " only blinked.";
            case 6:
                return "So " + hero_ + " and " + friend_name_ + " counted " +
                       std::to_string(2 + rng_.next_index(9)) + " " + pick(lex_.objects) +
                       "s and set them by " + pick(lex_.places) + ".";
            case 7:
                return "It was the " + pick(lex_.adjectives) + " " + pick(lex_.creatures) + " of " +
                       pick(lex_.places) + " who knew the way, or said it did.";
            case 8:
                return hero_ + " felt " + pick(lex_.moods) + ", for " + pick(lex_.weather) +
                       " was coming over " + home_ + ".";
            default:
                return "Then the " + pick(lex_.adjectives) + " " + creature_ + " carried the " +
                       pick(lex_.objects) + " across " + pick(lex_.places) + " before " +
                       pick(lex_.times) + " could pass.";
        }
    }

    const std::string& pick(const std::vector<std::string>& v) {
        return v[rng_.next_index(v.size())];
    }

    static std::string upper(std::string s) {
        for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return s;
    }

    PrngState rng_;
    const Lex& lex_;
    std::string hero_, friend_name_, creature_, home_, treasure_;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generate the deterministic fixture corpus"};
    std::string out_dir = "data/fixture";
    uint64_t seed = 20240817;
    int books = 12;
    int paragraphs = 115;
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--books", books, "number of books");
    app.add_option("--paragraphs", paragraphs, "paragraphs per book");
    CLI11_PARSE(app, argc, argv);

    std::filesystem::create_directories(out_dir);
    Lex lex;
    size_t total = 0;
    for (int b = 1; b <= books; ++b) {
        StoryWriter writer(seed + static_cast<uint64_t>(b), lex);
        std::string body = writer.book(b, paragraphs);
        char name[32];
        std::snprintf(name, sizeof name, "book%02d.txt", b);
        std::string text;
        text += "Storybook Corpus, volume " + std::to_string(b) + "\n";
        text += "This volume is synthetic text produced by tools/gen_fixture.cpp.\n\n";
        text += "*** START OF STORYBOOK " + std::to_string(b) + " ***\n\n";
        text += body;
        text += "\n*** END OF STORYBOOK " + std::to_string(b) + " ***\n";
        text += "\nEnd matter: regenerate with gen_fixture --seed " + std::to_string(seed) + ".\n";
        std::ofstream os(std::filesystem::path(out_dir) / name, std::ios::binary);
        os << text;
        total += text.size();
        std::cout << name << " " << text.size() << " bytes\n";
    }
    std::cout << "total " << total << " bytes in " << books << " books\n";
    return 0;
}
