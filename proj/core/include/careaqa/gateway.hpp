// Copyright 2026 The careaqa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace careaqa::gateway {

/// API key environment variable consumed by the HTTP transport.
inline constexpr const char* kApiKeyEnvVar = "CAREAQA_LLM_API_KEY";

class GatewayError : public std::runtime_error {
public:
    enum class Kind {
        auth,
        transient_exhausted,
        malformed_endpoint_reply,
        script_exhausted,
        not_configured,
    };
    GatewayError(Kind kind, const std::string& msg, int attempts = 0)
        : std::runtime_error(msg), kind_(kind), attempts_(attempts) {}
    Kind kind() const { return kind_; }
    int attempts() const { return attempts_; }

private:
    Kind kind_;
    int attempts_;
};

struct ChatRequest {
    std::optional<std::string> system;
    std::string user;
    double temperature{0.0};
    int max_tokens{512};
    std::string model_tag;
};

struct RetryPolicy {
    int max_attempts{3};
    int base_delay_ms{200};
    double backoff_factor{2.0};
    double rate_limit_rps{4.0};
};

struct AttemptRecord {
    int attempt{0};           // 1-based
    std::string status;       // "ok", "transient", "auth", "malformed"
    int planned_delay_ms{0};  // backoff scheduled after this attempt (0 on last/ok)
};

struct CallTrace {
    std::vector<AttemptRecord> attempts;
};

/// One transport attempt outcome; transports never retry themselves.
struct TransportResult {
    enum class Status { ok, transient, auth, malformed } status{Status::ok};
    std::string text;  // assistant text on ok, diagnostic otherwise
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual TransportResult attempt(const ChatRequest& req) = 0;
};

/// Scripted outcomes replayed in order; exhaustion either throws (strict) or
/// repeats the final outcome. Thread-safe; each scripted outcome is delivered
/// exactly once while the script lasts.
class MockTransport : public Transport {
public:
    struct Outcome {
        TransportResult::Status status{TransportResult::Status::ok};
        std::string text;
    };
    MockTransport(std::vector<Outcome> script, bool strict);
    TransportResult attempt(const ChatRequest& req) override;
    size_t calls() const;

    static Outcome ok(std::string text) { return {TransportResult::Status::ok, std::move(text)}; }
    static Outcome transient(std::string text = "timeout") {
        return {TransportResult::Status::transient, std::move(text)};
    }
    static Outcome auth(std::string text = "unauthorized") {
        return {TransportResult::Status::auth, std::move(text)};
    }
    static Outcome malformed(std::string text = "bad reply") {
        return {TransportResult::Status::malformed, std::move(text)};
    }

private:
    std::vector<Outcome> script_;
    bool strict_;
    mutable std::mutex mutex_;
    size_t next_{0};
};

/// Chat-completion HTTP transport (single translation seam for any
/// OpenAI-compatible endpoint). Reads the API key from CAREAQA_LLM_API_KEY.
class HttpTransport : public Transport {
public:
    HttpTransport(std::string endpoint_url, int timeout_s = 60);
    ~HttpTransport() override;
    TransportResult attempt(const ChatRequest& req) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Shared client for every external chat endpoint: retries with exponential
/// backoff, a global requests-per-second bound, and a pluggable transport.
class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit Gateway(std::shared_ptr<Transport> transport, Sleeper sleeper = nullptr);

    /// Returns the assistant text of the first successful attempt.
    /// Transient failures retry with delay = base * factor^(attempt-1);
    /// auth and malformed replies never retry.
    std::string complete(const ChatRequest& req, const RetryPolicy& policy,
                         CallTrace* trace = nullptr);

private:
    void pace(double rps);

    std::shared_ptr<Transport> transport_;
    Sleeper sleeper_;
    std::mutex pace_mutex_;
    std::chrono::steady_clock::time_point next_allowed_{};
};

std::shared_ptr<Gateway> make_mock_gateway(std::vector<MockTransport::Outcome> script,
                                           bool strict = false);

}  // namespace careaqa::gateway
