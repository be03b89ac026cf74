#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fgp/fxp.hpp"
#include "fgp/gmp.hpp"

namespace fgp::msgio {

// Text exchange format for messages and matrices. One complex entry per
// token, written as re+imj (for example 1.5-0.25j), row-major.
//
//   msg <n> <MeanCov|WeightedMean>
//   <n mean tokens>
//   <n rows of n cov tokens>
//
//   mat <rows> <cols>
//   <rows lines of cols tokens>

std::string complex_token(gmp::Complex v);
gmp::Complex parse_complex_token(const std::string& token);

void write_message(std::ostream& os, const gmp::GaussianMessage& msg);
gmp::GaussianMessage read_message(std::istream& is);

void write_matrix(std::ostream& os, const gmp::CMatrix& m);
gmp::CMatrix read_matrix(std::istream& is);

std::string message_to_string(const gmp::GaussianMessage& msg);
gmp::GaussianMessage message_from_string(const std::string& text);
std::string matrix_to_string(const gmp::CMatrix& m);
gmp::CMatrix matrix_from_string(const std::string& text);

// Raw memory dump format: one 32-bit word per line, lowercase hex.
std::string words_to_hex(const std::vector<std::uint32_t>& words);
std::vector<std::uint32_t> hex_to_words(const std::string& text);

void save_file(const std::string& path, const std::string& text);
std::string load_file(const std::string& path);

}  // namespace fgp::msgio
