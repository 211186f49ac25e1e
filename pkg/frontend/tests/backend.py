"""Test backend for the UI suite: testbed sites (CORS mode) plus a portal
server on loopback. Prints one JSON config line, then serves until killed.
"""

import json
import sys
import time

from clipportal import model
from clipportal.server import PortalServer, PortalState, UserAccount
from clipportal.testbed import Testbed
from clipportal.vault import CredentialVault

PORTAL_USER = "alice"
PORTAL_PASS = "wonderland"


def descriptor_dict(bed: Testbed) -> dict:
    grades = bed.grades_origin
    return {
        "portal_id": "campus",
        "title": "Campus Portal",
        "version": 1,
        "layout": [["news", "grades"]],
        "portlets": {
            "news": {
                "title": "Town News",
                "source_url": bed.news_url,
                "clip_rules": [{"kind": "select", "path": "//div[@id='headlines']"}],
                "refresh": {"interval_seconds": 1, "policy": "interval"},
            },
            "grades": {
                "title": "Transcript",
                "source_url": f"{grades}/grades",
                "clip_rules": [
                    {"kind": "select", "path": "//div[@id='grades']"},
                    {"kind": "cut", "path": "//script"},
                ],
                "workflow": [
                    {"step": "get", "url": f"{grades}/login"},
                    {"step": "submit_form", "form_path": "//form[@id='loginform']",
                     "fields": {"u": "{user}", "p": "{pass}"}},
                    {"step": "clip"},
                ],
                "credential_ref": "grades-svc",
                "refresh": {"interval_seconds": 1, "policy": "interval"},
            },
        },
    }


def main() -> None:
    import tempfile

    bed = Testbed(cors=True, pad=256).start()
    tmp = tempfile.mkdtemp(prefix="clipportal-ui-")
    vault = CredentialVault(f"{tmp}/vault.bin", "ui-test-pass")
    vault.put(model.CredentialEntry(
        "grades-svc", bed.state.login_user, bed.state.login_pass))
    descriptor = model.load_descriptor(json.dumps(descriptor_dict(bed)))
    state = PortalState(
        users={PORTAL_USER: UserAccount(PORTAL_USER, PORTAL_PASS, admin=True)},
        descriptors={"campus": descriptor},
        vault=vault,
        insecure_loopback=True,
    )
    server = PortalServer(state, port=0).start()
    print(json.dumps({
        "portal_url": server.url,
        "news_origin": bed.news_origin,
        "grades_origin": bed.grades_origin,
        "portal_user": PORTAL_USER,
        "portal_pass": PORTAL_PASS,
    }), flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
        bed.stop()


if __name__ == "__main__":
    sys.exit(main())
