#include <gtest/gtest.h>

#include "flowguard/http.hpp"

using namespace flowguard::http;

TEST(Url, DecomposesAbsoluteUrl) {
  const auto u = parse_url("https://accounts.google.com/o/oauth2/auth?response_type=code");
  EXPECT_EQ(u.scheme, "https");
  EXPECT_EQ(u.host, "accounts.google.com");
  EXPECT_EQ(u.port, 443);
  EXPECT_EQ(u.path, "/o/oauth2/auth");
  EXPECT_EQ(u.query, "response_type=code");
  EXPECT_EQ(u.fragment, "");
  EXPECT_EQ(u.serialize(), "https://accounts.google.com/o/oauth2/auth?response_type=code");
}

TEST(Url, ElidesDefaultPort) {
  EXPECT_EQ(parse_url("http://rp.example:80/cb").serialize(), "http://rp.example/cb");
  EXPECT_EQ(parse_url("https://rp.example:443/").serialize(), "https://rp.example/");
  EXPECT_EQ(parse_url("https://rp.example:8443/x").serialize(), "https://rp.example:8443/x");
}

TEST(Url, RejectsRelativeAndJunk) {
  EXPECT_THROW(parse_url("cb?code=x"), MalformedUrl);
  EXPECT_THROW(parse_url("/cb"), MalformedUrl);
  EXPECT_THROW(parse_url("https://"), MalformedUrl);
  EXPECT_THROW(parse_url("https://host:99999/"), MalformedUrl);
  EXPECT_THROW(parse_url("https://ho st/"), MalformedUrl);
}

TEST(Url, KeepsPathQueryAndFragmentBytes) {
  const std::string text = "https://rp.example/a%2Fb/c?x=%41&y=a+b#access_token=T&state=s";
  const auto u = parse_url(text);
  EXPECT_EQ(u.path, "/a%2Fb/c");
  EXPECT_EQ(u.query, "x=%41&y=a+b");
  EXPECT_EQ(u.fragment, "access_token=T&state=s");
  EXPECT_EQ(u.serialize(), text);
}

TEST(Url, EmptyQueryAndFragmentSurviveRoundTrip) {
  EXPECT_EQ(parse_url("https://rp.example/cb?").serialize(), "https://rp.example/cb?");
  EXPECT_EQ(parse_url("https://rp.example/cb#").serialize(), "https://rp.example/cb#");
  EXPECT_EQ(parse_url("https://rp.example").path, "");
}

TEST(Url, HostIsLowercased) {
  EXPECT_EQ(parse_url("HTTPS://RP.Example/Cb").serialize(), "https://rp.example/Cb");
}

TEST(Url, EndpointExcludesQuery) {
  EXPECT_EQ(parse_url("https://rp.example:8443/cb?code=1#f").endpoint(), "https://rp.example:8443/cb");
  EXPECT_EQ(parse_url("https://rp.example/cb?code=1").target(), "/cb?code=1");
  EXPECT_EQ(parse_url("https://rp.example").target(), "/");
}

TEST(Url, Ipv6Literal) {
  const auto u = parse_url("http://[::1]:8080/x");
  EXPECT_EQ(u.host, "[::1]");
  EXPECT_EQ(u.port, 8080);
  EXPECT_EQ(u.serialize(), "http://[::1]:8080/x");
}

TEST(Origin, StripsPathAndQuery) {
  EXPECT_EQ(origin_of(parse_url("https://rp.example/cb?x=1")).to_string(), "https://rp.example/");
  EXPECT_EQ(origin_of(parse_url("http://a.example:8080/p")).to_string(), "http://a.example:8080/");
}

TEST(Origin, HostComparisonIgnoresCase) {
  EXPECT_EQ(origin_of(parse_url("https://ATTACKER.example/")), origin_of(parse_url("https://attacker.example/")));
  EXPECT_NE(origin_of(parse_url("https://attacker.example/")), origin_of(parse_url("http://attacker.example/")));
  EXPECT_NE(origin_of(parse_url("https://attacker.example/")),
            origin_of(parse_url("https://attacker.example:444/")));
}

TEST(Origin, ReparseIsIdempotent) {
  for (const char* t : {"https://rp.example/", "http://a.example:8080/", "https://[::1]:9/"}) {
    const auto o = origin_of(parse_url(t));
    EXPECT_EQ(origin_of(parse_url(o.to_string())), o) << t;
  }
  EXPECT_EQ(parse_origin("https://rp.example"), origin_of(parse_url("https://rp.example/cb")));
  EXPECT_FALSE(parse_origin("not a url").has_value());
}

TEST(Params, QueryInOrder) {
  HttpRequest r;
  r.url = parse_url("https://rp.example/cb?code=abc&state=s1");
  EXPECT_EQ(extract_params(r), (ParamList{{"code", "abc"}, {"state", "s1"}}));
}

TEST(Params, FormBodyAfterQuery) {
  HttpRequest r;
  r.method = "POST";
  r.url = parse_url("https://sp.example/acs?x=1");
  r.headers.add("Content-Type", "application/x-www-form-urlencoded; charset=utf-8");
  r.body = "SAMLResponse=R&RelayState=U";
  EXPECT_EQ(extract_params(r), (ParamList{{"x", "1"}, {"SAMLResponse", "R"}, {"RelayState", "U"}}));
}

TEST(Params, DuplicatesKept) {
  HttpRequest r;
  r.url = parse_url("https://rp.example/cb?a=1&a=2");
  EXPECT_EQ(extract_params(r), (ParamList{{"a", "1"}, {"a", "2"}}));
}

TEST(Params, DecodedAndNamesCaseSensitive) {
  HttpRequest r;
  r.url = parse_url("https://rp.example/cb?redirect_uri=https%3A%2F%2Frp.example%2Fcb&Code=x&flag&q=a+b");
  const auto p = extract_params(r);
  ASSERT_EQ(p.size(), 4u);
  EXPECT_EQ(p[0].second, "https://rp.example/cb");
  EXPECT_EQ(p[1].first, "Code");
  EXPECT_EQ(p[2], (std::pair<std::string, std::string>{"flag", ""}));
  EXPECT_EQ(p[3].second, "a b");
}

TEST(Params, MultipartBodyIsNotAParameterSource) {
  HttpRequest r;
  r.method = "POST";
  r.url = parse_url("https://rp.example/upload");
  r.headers.add("Content-Type", "multipart/form-data; boundary=x");
  r.body = "code=abc";
  EXPECT_TRUE(extract_params(r).empty());
}

TEST(Headers, NamesCaseInsensitiveValuesExact) {
  Headers h;
  h.add("Location", "https://rp.example/CB");
  h.add("set-cookie", "a=1");
  h.add("Set-Cookie", "b=2");
  EXPECT_EQ(h.get("location"), "https://rp.example/CB");
  EXPECT_EQ(h.get_all("SET-COOKIE").size(), 2u);
  h.set("SET-COOKIE", "c=3");
  EXPECT_EQ(h.get_all("set-cookie"), std::vector<std::string>{"c=3"});
  h.remove("LOCATION");
  EXPECT_FALSE(h.contains("Location"));
}

TEST(Percent, EncodeDecode) {
  EXPECT_EQ(percent_encode("a b/c?d=e&f"), "a%20b%2Fc%3Fd%3De%26f");
  EXPECT_EQ(percent_decode("a%20b%2fc"), "a b/c");
  EXPECT_EQ(percent_decode("a+b", true), "a b");
  EXPECT_EQ(percent_decode("a+b"), "a+b");
  EXPECT_EQ(percent_decode("%zz%4"), "%zz%4");
  EXPECT_EQ(percent_encode("AZaz09-._~"), "AZaz09-._~");
}

TEST(Wire, RequestRoundTripAbsoluteForm) {
  const std::string raw =
      "GET http://rp.example/cb?code=abc HTTP/1.1\r\n"
      "Host: rp.example\r\n"
      "Referer: https://accounts.google.com/\r\n"
      "\r\n";
  const auto r = parse_request(raw);
  EXPECT_EQ(r.method, "GET");
  EXPECT_EQ(r.url.query, "code=abc");
  EXPECT_EQ(serialize_request(r, true), raw);
}

TEST(Wire, RequestRoundTripOriginFormWithBody) {
  const std::string raw =
      "POST /acs HTTP/1.1\r\n"
      "Host: sp.example:8443\r\n"
      "Content-Type: application/x-www-form-urlencoded\r\n"
      "Content-Length: 27\r\n"
      "\r\n"
      "SAMLResponse=R&RelayState=U";
  const auto r = parse_request(raw, "https");
  EXPECT_EQ(r.url.serialize(), "https://sp.example:8443/acs");
  EXPECT_EQ(extract_params(r).size(), 2u);
  EXPECT_EQ(serialize_request(r, false), raw);
}

TEST(Wire, OriginFormNeedsHost) {
  EXPECT_THROW(parse_request("GET /cb HTTP/1.1\r\n\r\n"), MalformedMessage);
  EXPECT_THROW(parse_request("garbage"), MalformedMessage);
}

TEST(Wire, ResponseRoundTrip) {
  const std::string raw =
      "HTTP/1.1 302 Found\r\n"
      "Location: https://rp.example/cb?code=abc\r\n"
      "Content-Length: 0\r\n"
      "\r\n";
  const auto r = parse_response(raw, parse_url("https://accounts.google.com/o/oauth2/auth"));
  EXPECT_EQ(r.status, 302);
  EXPECT_EQ(r.headers.get("location"), "https://rp.example/cb?code=abc");
  EXPECT_EQ(serialize_response(r), raw);
}
