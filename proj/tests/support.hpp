#pragma once

#include <fstream>

#include "nomon/lab.hpp"

namespace nomon::test {

inline const std::filesystem::path& data_dir() {
  static const std::filesystem::path dir = NOMON_DATA_DIR;
  return dir;
}

inline const lm::LanguageModel& bundled_model() {
  static const lm::LanguageModel model = lm::LanguageModel::train(lm::read_lines(data_dir() / "corpus.txt"), 6);
  return model;
}

inline const std::vector<lab::Phrase>& bundled_phrases() {
  static const std::vector<lab::Phrase> phrases = [] {
    std::ifstream in(data_dir() / "phrases.tsv");
    return lab::parse_phrases(in, "phrases.tsv");
  }();
  return phrases;
}

}  // namespace nomon::test
