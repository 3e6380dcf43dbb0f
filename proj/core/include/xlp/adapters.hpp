#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlp/embedding.hpp"
#include "xlp/pivot.hpp"

// External model adapters speaking line-delimited JSON over a child
// process's stdin/stdout:
//   {"op":"score","a":str,"b":str}                    -> {"score":float}
//   {"op":"translate","text":str,"src":str,"tgt":str} -> {"text":str}
//   {"op":"embed","text":str,"lang":str}              -> {"vector":[float,...]}
// A reply of {"error":str}, a timeout, EOF or a nonzero exit is an
// adapter error. Calls on one process are serialized (one in flight).
namespace xlp {

// Reads XLPIVOT_ADAPTER_TIMEOUT_MS; defaults to 30 s.
std::chrono::milliseconds adapter_timeout();

class PipeProcess {
 public:
  // `command` is split on whitespace and exec'd directly (no shell).
  PipeProcess(std::string name, const std::string& command,
              std::chrono::milliseconds timeout = adapter_timeout());
  ~PipeProcess();
  PipeProcess(const PipeProcess&) = delete;
  PipeProcess& operator=(const PipeProcess&) = delete;

  const std::string& name() const noexcept { return name_; }
  nlohmann::json call(const nlohmann::json& request);

 private:
  std::string read_line();
  void write_all(std::string_view data);
  [[noreturn]] void fail(std::string_view what);

  std::string name_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  bool broken_ = false;
  std::mutex mu_;
};

class PipeScorer final : public Scorer {
 public:
  explicit PipeScorer(std::shared_ptr<PipeProcess> process) : process_(std::move(process)) {}
  std::string name() const override { return "pipe:" + process_->name(); }
  double score(std::string_view lrl_text, std::string_view hrl_text) const override;

 private:
  std::shared_ptr<PipeProcess> process_;
};

class PipeTranslator final : public Translator {
 public:
  explicit PipeTranslator(std::shared_ptr<PipeProcess> process) : process_(std::move(process)) {}
  std::string name() const override { return "pipe:" + process_->name(); }
  std::string translate(std::string_view text, std::string_view source_lang,
                        std::string_view target_lang) const override;

 private:
  std::shared_ptr<PipeProcess> process_;
};

// Encoder served by an external process. `encoder_name` must match the name
// recorded in any vector store it is mixed with.
class PipeEncoder final : public Encoder {
 public:
  PipeEncoder(std::shared_ptr<PipeProcess> process, std::string encoder_name, size_t dim)
      : process_(std::move(process)), name_(std::move(encoder_name)), dim_(dim) {}
  std::string name() const override { return name_; }
  size_t dim() const override { return dim_; }
  EmbeddingVector encode(std::string_view text, std::string_view lang) const override;
  using Encoder::encode;

 private:
  std::shared_ptr<PipeProcess> process_;
  std::string name_;
  size_t dim_;
};

}  // namespace xlp
