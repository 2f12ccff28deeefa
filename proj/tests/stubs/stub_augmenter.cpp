// Augmenter used for MAP6 tests.
//
//   stub_augmenter [--mode reverse|echo|tab|fail-first]
//
// reverse: word order reversed. echo: text unchanged (always rejected as a
// no-op). tab: output with an embedded tab. fail-first: error replies to the
// first two requests of the session, then reverse.

#include <algorithm>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

int main(int argc, char** argv) {
  std::string mode = "reverse";
  for (int i = 1; i + 1 < argc; i += 2)
    if (std::string(argv[i]) == "--mode") mode = argv[i + 1];
  std::string line;
  int served = 0;
  while (std::getline(std::cin, line)) {
    const auto req = nlohmann::json::parse(line);
    const auto id = req.at("id").get<std::uint64_t>();
    const auto text = req.at("text").get<std::string>();
    nlohmann::json resp;
    resp["id"] = id;
    if (mode == "echo") {
      resp["text"] = text;
    } else if (mode == "tab") {
      resp["text"] = text + "\tx";
    } else if (mode == "fail-first" && served < 2) {
      resp["error"] = "transient";
    } else {
      std::istringstream in(text);
      std::vector<std::string> words{std::istream_iterator<std::string>(in), {}};
      std::reverse(words.begin(), words.end());
      std::string out;
      for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
      resp["text"] = out;
    }
    std::cout << resp.dump() << "\n" << std::flush;
    ++served;
  }
  return 0;
}
