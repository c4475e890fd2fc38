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

#include "careaqa/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace careaqa::gateway {

using json = nlohmann::json;

// --- MockTransport ----------------------------------------------------------

MockTransport::MockTransport(std::vector<Outcome> script, bool strict)
    : script_(std::move(script)), strict_(strict) {
    if (script_.empty()) throw std::invalid_argument("mock script must be non-empty");
}

TransportResult MockTransport::attempt(const ChatRequest&) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (next_ >= script_.size()) {
        if (strict_)
            throw GatewayError(GatewayError::Kind::script_exhausted,
                               "mock script exhausted after " + std::to_string(script_.size()) +
                                   " outcomes");
        const Outcome& o = script_.back();
        ++next_;
        return {o.status, o.text};
    }
    const Outcome& o = script_[next_++];
    return {o.status, o.text};
}

size_t MockTransport::calls() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return next_;
}

// --- HttpTransport ----------------------------------------------------------

struct HttpTransport::Impl {
    std::string scheme_host;
    std::string path;
    int timeout_s;
};

HttpTransport::HttpTransport(std::string endpoint_url, int timeout_s)
    : impl_(std::make_unique<Impl>()) {
    impl_->timeout_s = timeout_s;
    const auto scheme_end = endpoint_url.find("://");
    if (scheme_end == std::string::npos)
        throw GatewayError(GatewayError::Kind::not_configured,
                           "endpoint URL must include a scheme: " + endpoint_url);
    const auto path_start = endpoint_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        impl_->scheme_host = endpoint_url;
        impl_->path = "/v1/chat/completions";
    } else {
        impl_->scheme_host = endpoint_url.substr(0, path_start);
        impl_->path = endpoint_url.substr(path_start);
    }
}

HttpTransport::~HttpTransport() = default;

TransportResult HttpTransport::attempt(const ChatRequest& req) {
    const char* key = std::getenv(kApiKeyEnvVar);
    if (!key || !*key)
        return {TransportResult::Status::auth,
                std::string("credential not configured (set ") + kApiKeyEnvVar + ")"};

    json body;
    body["model"] = req.model_tag;
    body["temperature"] = req.temperature;
    body["max_tokens"] = req.max_tokens;
    body["messages"] = json::array();
    if (req.system) body["messages"].push_back({{"role", "system"}, {"content", *req.system}});
    body["messages"].push_back({{"role", "user"}, {"content", req.user}});

    httplib::Client client(impl_->scheme_host);
    client.set_connection_timeout(impl_->timeout_s);
    client.set_read_timeout(impl_->timeout_s);
    httplib::Headers headers = {{"Authorization", std::string("Bearer ") + key}};

    auto res = client.Post(impl_->path, headers, body.dump(), "application/json");
    if (!res) return {TransportResult::Status::transient, "connection failed"};
    if (res->status == 401 || res->status == 403)
        return {TransportResult::Status::auth, "endpoint rejected credentials"};
    if (res->status == 429 || res->status >= 500)
        return {TransportResult::Status::transient, "status " + std::to_string(res->status)};
    if (res->status < 200 || res->status >= 300)
        return {TransportResult::Status::malformed, "status " + std::to_string(res->status)};
    try {
        json reply = json::parse(res->body);
        return {TransportResult::Status::ok,
                reply.at("choices").at(0).at("message").at("content").get<std::string>()};
    } catch (const json::exception& e) {
        return {TransportResult::Status::malformed,
                std::string("unparseable chat reply: ") + e.what()};
    }
}

// --- Gateway ------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Transport> transport, Sleeper sleeper)
    : transport_(std::move(transport)),
      sleeper_(sleeper ? std::move(sleeper) : [](std::chrono::milliseconds d) {
          std::this_thread::sleep_for(d);
      }) {}

void Gateway::pace(double rps) {
    if (rps <= 0.0) return;
    const auto interval =
        std::chrono::microseconds(static_cast<int64_t>(std::llround(1e6 / rps)));
    std::chrono::milliseconds wait{0};
    {
        std::lock_guard<std::mutex> lock(pace_mutex_);
        const auto now = std::chrono::steady_clock::now();
        if (next_allowed_ > now)
            wait = std::chrono::duration_cast<std::chrono::milliseconds>(next_allowed_ - now);
        next_allowed_ = std::max(next_allowed_, now) + interval;
    }
    if (wait.count() > 0) sleeper_(wait);
}

std::string Gateway::complete(const ChatRequest& req, const RetryPolicy& policy,
                              CallTrace* trace) {
    if (req.user.empty()) throw std::invalid_argument("ChatRequest.user must be non-empty");
    if (req.max_tokens < 1) throw std::invalid_argument("ChatRequest.max_tokens must be >= 1");
    if (policy.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");

    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        pace(policy.rate_limit_rps);
        const TransportResult result = transport_->attempt(req);
        AttemptRecord record;
        record.attempt = attempt;
        switch (result.status) {
            case TransportResult::Status::ok:
                record.status = "ok";
                if (trace) trace->attempts.push_back(record);
                return result.text;
            case TransportResult::Status::auth:
                record.status = "auth";
                if (trace) trace->attempts.push_back(record);
                throw GatewayError(GatewayError::Kind::auth, result.text, attempt);
            case TransportResult::Status::malformed:
                record.status = "malformed";
                if (trace) trace->attempts.push_back(record);
                throw GatewayError(GatewayError::Kind::malformed_endpoint_reply, result.text,
                                   attempt);
            case TransportResult::Status::transient: {
                record.status = "transient";
                if (attempt < policy.max_attempts) {
                    const double delay = policy.base_delay_ms *
                                         std::pow(policy.backoff_factor, attempt - 1);
                    record.planned_delay_ms = static_cast<int>(std::llround(delay));
                    if (trace) trace->attempts.push_back(record);
                    sleeper_(std::chrono::milliseconds(record.planned_delay_ms));
                } else {
                    if (trace) trace->attempts.push_back(record);
                    throw GatewayError(GatewayError::Kind::transient_exhausted,
                                       "transient failures exhausted " +
                                           std::to_string(policy.max_attempts) + " attempts: " +
                                           result.text,
                                       attempt);
                }
                break;
            }
        }
    }
    throw GatewayError(GatewayError::Kind::transient_exhausted, "unreachable",
                       policy.max_attempts);
}

std::shared_ptr<Gateway> make_mock_gateway(std::vector<MockTransport::Outcome> script,
                                           bool strict) {
    auto transport = std::make_shared<MockTransport>(std::move(script), strict);
    // No real sleeping in mock mode; tests run offline and instantly.
    return std::make_shared<Gateway>(transport, [](std::chrono::milliseconds) {});
}

}  // namespace careaqa::gateway
