"""Shared fixtures: testbed sites, a portal server over them, sessions."""

from __future__ import annotations

import json
import os

import pytest

from clipportal import model
from clipportal.server import PortalServer, PortalState, UserAccount
from clipportal.testbed import Testbed
from clipportal.vault import CredentialVault

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

PORTAL_USER = "alice"
PORTAL_PASS = "wonderland"
VAULT_PASSPHRASE = "correct horse battery staple"
GRADES_SERVICE = "grades-svc"


def campus_descriptor_dict(bed: Testbed) -> dict:
    """The canonical three-portlet descriptor over the testbed sites."""
    grades = bed.grades_origin
    return {
        "portal_id": "campus",
        "title": "Campus Portal",
        "version": 1,
        "layout": [["news", "grades"], ["applet"]],
        "portlets": {
            "news": {
                "title": "Town News",
                "source_url": bed.news_url,
                "clip_rules": [
                    {"kind": "select", "path": "//div[@id='headlines']"},
                ],
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
                "credential_ref": GRADES_SERVICE,
                "refresh": {"interval_seconds": 1, "policy": "interval"},
            },
            "applet": {
                "title": "Grade Explorer",
                "source_url": f"{grades}/applet",
                "clip_rules": [
                    {"kind": "select", "path": "//div[@id='applet-area']"},
                ],
                "workflow": [
                    {"step": "get", "url": f"{grades}/login"},
                    {"step": "submit_form", "form_path": "//form[@id='loginform']",
                     "fields": {"u": "{user}", "p": "{pass}"}},
                    {"step": "get", "url": f"{grades}/applet"},
                    {"step": "clip"},
                ],
                "credential_ref": GRADES_SERVICE,
                "sanitize_policy": "trusted",
                "refresh": {"interval_seconds": 1, "policy": "interval"},
            },
        },
    }


@pytest.fixture()
def testbed():
    bed = Testbed().start()
    yield bed
    bed.stop()


@pytest.fixture()
def portal(testbed, tmp_path):
    """Portal server (insecure loopback) preloaded with the campus portal."""
    descriptor = model.load_descriptor(json.dumps(campus_descriptor_dict(testbed)))
    vault = CredentialVault(str(tmp_path / "vault.bin"), VAULT_PASSPHRASE)
    vault.put(model.CredentialEntry(
        GRADES_SERVICE, testbed.state.login_user, testbed.state.login_pass))
    state = PortalState(
        users={
            PORTAL_USER: UserAccount(PORTAL_USER, PORTAL_PASS, admin=True),
            "bob": UserAccount("bob", "builder", admin=False),
        },
        descriptors={descriptor.portal_id: descriptor},
        vault=vault,
        portal_file=str(tmp_path / "portal.json"),
        insecure_loopback=True,
    )
    server = PortalServer(state, port=0).start()
    yield server
    server.stop()


@pytest.fixture()
def session(portal):
    from clipportal import client

    return client.init_session(portal.url, "campus", PORTAL_USER, PORTAL_PASS)
