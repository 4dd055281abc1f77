#!/usr/bin/env python3
"""Regenerates the bundled OAuth specs under specs/v1.

google-explicit-nostate.xml is the reference document every other OAuth
variant is derived from; it is written out unchanged. The SAML and Gigya
specs are maintained by hand.
"""

import argparse
import pathlib

PROVIDERS = {
    "google": (r"https://accounts\.google\.com/o/oauth2/(?:.*?/)?auth", "https://accounts.google.com/"),
    "facebook": (r"https://www\.facebook\.com/(?:v[0-9.]+/)?dialog/oauth", "https://www.facebook.com/"),
    "vk": (r"https://oauth\.vk\.com/authorize", "https://oauth.vk.com/"),
}

REFERENCE = """<Specification name="google-explicit-nostate">
    <Protocol>
        <Request method="GET" desc="req_init">
            <Endpoint>
                <Regexp> https://accounts\\.google\\.com/o/oauth2/(?:.*?/)?auth </Regexp>
            </Endpoint>
            <Parameter name="response_type"> code </Parameter>
            <Parameter name="redirect_uri" id="req_init_redirect_uri" />
        </Request>
        <Response desc="resp_init">
            <Endpoint>
                <Regexp> https://accounts\\.google\\.com/o/oauth2/(?:.*?/)?auth </Regexp>
            </Endpoint>
            <Header name="Location" id="resp_init_location" />
        </Response>
        <Request method="GET" desc="req_code">
            <Endpoint id="uri2"/>
            <Parameter name="code">
                <Regexp> [^\\s]{40,} </Regexp>
            </Parameter>
        </Request>
    </Protocol>
    <Identifiers>
        <Definition id="uri1">
            <Source> ${req_init_redirect_uri} </Source>
            <Regexp> ^(https?://.*?)(?:\\?|$) </Regexp>
        </Definition>
        <Definition id="origin">
            <Source> ${req_init_redirect_uri} </Source>
            <Regexp> ^(https?://.*?/).* </Regexp>
        </Definition>
        <Definition id="authcode">
            <Source> ${resp_init_location} </Source>
            <Regexp> [?&amp;]code=(.*?)(?:&amp;|$) </Regexp>
        </Definition>
    </Identifiers>
    <Policy>
        <Secrecy> <!-- the auth code contained in the Location header must be kept secret -->
            <Target> ${authcode} </Target>
            <Origin> ${origin} </Origin>
            <Origin> https://accounts.google.com/ </Origin>
        </Secrecy>
        <Integrity> <!-- the last message must be sent to the redirect URI initially specified -->
            <Target> ${uri2} </Target>
            <Matches> ${uri1} </Matches>
        </Integrity>
    </Policy>
</Specification>
"""


def render(provider, implicit, with_state):
    endpoint, idp_origin = PROVIDERS[provider]
    mode = "implicit" if implicit else "explicit"
    name = f"{provider}-{mode}-{'state' if with_state else 'nostate'}"
    last = "req_token" if implicit else "req_code"
    secret = "token" if implicit else "authcode"
    sep = "#&amp;" if implicit else "?&amp;"
    out = []
    w = out.append
    w(f'<Specification name="{name}">')
    w("    <Protocol>")
    w('        <Request method="GET" desc="req_init">')
    w("            <Endpoint>")
    w(f"                <Regexp> {endpoint} </Regexp>")
    w("            </Endpoint>")
    w(f'            <Parameter name="response_type"> {"token" if implicit else "code"} </Parameter>')
    w('            <Parameter name="redirect_uri" id="req_init_redirect_uri" />')
    if with_state:
        w('            <Parameter name="state" id="req_init_state" />')
    w("        </Request>")
    w('        <Response desc="resp_init">')
    w("            <Endpoint>")
    w(f"                <Regexp> {endpoint} </Regexp>")
    w("            </Endpoint>")
    w('            <Header name="Location" id="resp_init_location" />')
    w("        </Response>")
    # the implicit token arrives in the fragment; a script on the redirect
    # URI page hands it to some endpoint on the RP's origin
    method = "" if implicit else ' method="GET"'
    w(f'        <Request{method} desc="{last}">')
    w('            <Endpoint id="uri2"/>')
    w(f'            <Parameter name="{"access_token" if implicit else "code"}">')
    w("                <Regexp> [^\\s]{40,} </Regexp>")
    w("            </Parameter>")
    if with_state:
        w(f'            <Parameter name="state" id="{last}_state" />')
    w("        </Request>")
    w("    </Protocol>")
    w("    <Identifiers>")
    w('        <Definition id="uri1">')
    w("            <Source> ${req_init_redirect_uri} </Source>")
    w("            <Regexp> ^(https?://.*?)(?:\\?|$) </Regexp>")
    w("        </Definition>")
    w('        <Definition id="origin">')
    w("            <Source> ${req_init_redirect_uri} </Source>")
    w("            <Regexp> ^(https?://.*?/).* </Regexp>")
    w("        </Definition>")
    w(f'        <Definition id="{secret}">')
    w("            <Source> ${resp_init_location} </Source>")
    w(f"            <Regexp> [{sep}]{'access_token' if implicit else 'code'}=(.*?)(?:&amp;|$) </Regexp>")
    w("        </Definition>")
    if implicit:
        w('        <Definition id="origin2">')
        w("            <Source> ${uri2} </Source>")
        w("            <Regexp> ^(https?://.*?/).* </Regexp>")
        w("        </Definition>")
    if with_state:
        w('        <Definition id="resp_state">')
        w("            <Source> ${resp_init_location} </Source>")
        w(f"            <Regexp> [{sep}]state=(.*?)(?:&amp;|$) </Regexp>")
        w("        </Definition>")
    w("    </Identifiers>")
    w("    <Policy>")
    for target in [secret] + (["resp_state"] if with_state else []):
        w("        <Secrecy>")
        w(f"            <Target> ${{{target}}} </Target>")
        w("            <Origin> ${origin} </Origin>")
        w(f"            <Origin> {idp_origin} </Origin>")
        w("        </Secrecy>")
    w("        <Integrity>")
    if implicit:
        w("            <Target> ${origin2} </Target>")
        w("            <Matches> ${origin} </Matches>")
    else:
        w("            <Target> ${uri2} </Target>")
        w("            <Matches> ${uri1} </Matches>")
    w("        </Integrity>")
    if with_state:
        w("        <Integrity>")
        w(f"            <Target> ${{{last}_state}} </Target>")
        w("            <Matches> ${req_init_state} </Matches>")
        w("        </Integrity>")
    w("    </Policy>")
    w("</Specification>")
    return name, "\n".join(out) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=pathlib.Path(__file__).resolve().parent.parent / "specs" / "v1", type=pathlib.Path)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for provider in PROVIDERS:
        for implicit in (False, True):
            for with_state in (True, False):
                name, text = render(provider, implicit, with_state)
                if name == "google-explicit-nostate":
                    text = REFERENCE
                (args.out / f"{name}.xml").write_text(text)
                print(f"wrote {name}.xml")


if __name__ == "__main__":
    main()
