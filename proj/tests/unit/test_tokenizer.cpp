#include <doctest.h>

#include "driftbench/errors.hpp"
#include "driftbench/tokenizer.hpp"
#include "support.hpp"

using namespace driftbench;

namespace {

FixtureTokenizer small() {
  return FixtureTokenizer({"<pad>", "<unk>", "<mask>", "##.", "Manc", "##hester", "Man", "United", "plays", "for",
                           "##s", "play"},
                          "<mask>");
}

std::vector<std::string> pieces(FixtureTokenizer& t, const std::string& text) {
  std::vector<std::string> out;
  for (auto id : t.encode(text, false)) out.push_back(t.vocab()[static_cast<std::size_t>(id)]);
  return out;
}

}  // namespace

TEST_CASE("greedy longest match with continuation pieces") {
  auto t = small();
  CHECK(pieces(t, "Manchester United") == std::vector<std::string>{"Manc", "##hester", "United"});
  CHECK(pieces(t, "plays") == std::vector<std::string>{"plays"});
  CHECK(pieces(t, "plays for <mask>.") == std::vector<std::string>{"plays", "for", "<mask>", "##."});
  CHECK(pieces(t, "  United\t") == std::vector<std::string>{"United"});
}

TEST_CASE("uncoverable words become unk") {
  auto t = small();
  CHECK(pieces(t, "Liverpool United") == std::vector<std::string>{"<unk>", "United"});
  CHECK(pieces(t, "<mask>zz") == std::vector<std::string>{"<mask>", "<unk>"});
}

TEST_CASE("decode joins continuation pieces") {
  auto t = small();
  auto ids = t.encode("Manchester United plays for <mask>.", false);
  CHECK(t.decode(ids) == " Manchester United plays for <mask>.");
  CHECK(trim(t.decode(ids)) == "Manchester United plays for <mask>.");
  std::vector<TokenId> bad{99};
  CHECK_THROWS_AS(t.decode(bad), std::out_of_range);
}

TEST_CASE("vocabulary validation") {
  CHECK_THROWS_AS(FixtureTokenizer({"a", "a", "<mask>"}, "<mask>"), LoadError);
  CHECK_THROWS_AS(FixtureTokenizer({"a", "b"}, "<mask>"), LoadError);
}

TEST_CASE("fixture vocabulary covers every fixture label") {
  auto t = FixtureTokenizer::from_vocab_file(fixture("vocab.txt"));
  auto unk = t.id_of("<unk>");
  for (const char* label : {"Cristiano Ronaldo", "Manchester United F.C.", "Juventus FC", "Mario Draghi",
                            "United States women's national soccer team", "Orlando Pride"}) {
    auto ids = t.encode(label, false);
    CHECK(std::find(ids.begin(), ids.end(), unk) == ids.end());
    CHECK(trim(t.decode(ids)) == label);
  }
}

TEST_CASE("caching tokenizer memoizes by text and prefix flag") {
  auto inner = std::make_shared<FixtureTokenizer>(small());
  CachingTokenizer c(inner);
  auto a = c.encode("Manchester United", false);
  auto b = c.encode("Manchester United", false);
  c.encode("Manchester United", true);
  CHECK(a == b);
  CHECK(c.hits() == 1);
  CHECK(c.provider_id() == inner->provider_id());
}
