"""portalctl: one entry point for the server, testbed, client and debug tools.

Exit codes follow the client contract: 0 all ok, 2 selector syntax error,
3 empty clip, 4 some portlets failed, 5 init failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import client as client_mod
from . import model
from .clip import ClipRule, EmptyClip, apply_clip
from .fetchlib import fetch, ssl_context_for_ca
from .html_tree import parse_html, serialize
from .server import PortalServer, PortalState, UserAccount, generate_self_signed_cert
from .testbed import Testbed
from .vault import CredentialVault
from .xpath import XPathSyntaxError, compile_xpath, evaluate

PASSPHRASE_ENV = "PORTAL_VAULT_PASSPHRASE"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="portalctl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("xpath", help="evaluate a selector against an HTML file")
    p.add_argument("--expr", required=True)
    p.add_argument("--file", required=True)
    p.add_argument("--base", default="http://localhost/")
    p.set_defaults(func=cmd_xpath)

    p = sub.add_parser("clip", help="clip an HTML file into a fragment")
    p.add_argument("--file", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--select", action="append", required=True)
    p.add_argument("--cut", action="append", default=[])
    p.add_argument("--policy", choices=("strict", "trusted"), default="strict")
    p.set_defaults(func=cmd_clip)

    p = sub.add_parser("serve", help="run the portal server")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("testbed", help="run the simulated legacy sites")
    p.add_argument("--port", type=int, default=8101, help="news port; grades uses port+1")
    p.add_argument("--cors", action="store_true")
    p.add_argument("--pad", type=int, default=0, help="filler bytes on the news page")
    p.set_defaults(func=cmd_testbed)

    p = sub.add_parser("add-portlet", help="author a portlet on a running server")
    p.add_argument("--server", required=True)
    p.add_argument("--portal", required=True)
    p.add_argument("--portlet-id", required=True)
    p.add_argument("--title")
    p.add_argument("--url", required=True, help="source page URL")
    p.add_argument("--select", action="append", required=True)
    p.add_argument("--cut", action="append", default=[])
    p.add_argument("--login-field", action="append", default=[],
                   help="form field mapping, e.g. user=u or pass=p")
    p.add_argument("--form-path", help="selector locating the login form")
    p.add_argument("--user", help="service username stored in the vault")
    p.add_argument("--pass", dest="password", help="service password stored in the vault")
    p.add_argument("--admin-user", required=True)
    p.add_argument("--admin-pass", required=True)
    p.add_argument("--ca", help="portal server certificate to trust")
    p.add_argument("--refresh-interval", type=int)
    p.set_defaults(func=cmd_add_portlet)

    p = sub.add_parser("render", help="fetch, clip and write the portal page")
    p.add_argument("--server", required=True)
    p.add_argument("--portal", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--pass", dest="password", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ca")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("watch", help="refresh portlets over repeated cycles")
    p.add_argument("--server", required=True)
    p.add_argument("--portal", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--pass", dest="password", required=True)
    p.add_argument("--cycles", type=int, required=True)
    p.add_argument("--interval", type=float, required=True)
    p.add_argument("--report", help="write one ChangeReport JSON per line")
    p.add_argument("--out", help="also render the portal after the run")
    p.add_argument("--ca")
    p.set_defaults(func=cmd_watch)

    args = parser.parse_args(argv)
    return args.func(args)


def cmd_xpath(args) -> int:
    try:
        expr = compile_xpath(args.expr)
    except XPathSyntaxError as exc:
        print(f"syntax error: {exc}", file=sys.stderr)
        return 2
    with open(args.file, "rb") as fh:
        doc = parse_html(fh.read(), args.base)
    for match in evaluate(expr, doc.root):
        print(serialize(match))
    return 0


def cmd_clip(args) -> int:
    try:
        rules = [ClipRule.select(s) for s in args.select]
        rules += [ClipRule.cut(c) for c in args.cut]
    except XPathSyntaxError as exc:
        print(f"syntax error: {exc}", file=sys.stderr)
        return 2
    with open(args.file, "rb") as fh:
        doc = parse_html(fh.read(), args.base)
    try:
        fragment = apply_clip(doc, rules, args.policy)
    except EmptyClip as exc:
        print(f"empty clip: {exc}", file=sys.stderr)
        return 3
    sys.stdout.write(fragment.html + "\n")
    print(fragment.digest, file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    from .config import load_config_file

    cfg = load_config_file(args.config)
    cfg_dir = os.path.dirname(os.path.abspath(args.config))

    def _path(value):
        return value if os.path.isabs(value) else os.path.join(cfg_dir, value)

    users = {}
    for name, raw in (cfg.get("users") or {}).items():
        users[name] = UserAccount(name=name, password=str(raw.get("password", "")),
                                  admin=bool(raw.get("admin", False)))
    if not users:
        print("config has no [users.*] entries", file=sys.stderr)
        return 1

    descriptors = {}
    portal_file = cfg.get("portal_file")
    if portal_file:
        portal_file = _path(portal_file)
        with open(portal_file, "r", encoding="utf-8") as fh:
            descriptor = model.load_descriptor(fh.read())
        descriptors[descriptor.portal_id] = descriptor

    vault = None
    vault_file = cfg.get("vault_file")
    if vault_file:
        passphrase = os.environ.get(PASSPHRASE_ENV)
        if not passphrase:
            print(f"set {PASSPHRASE_ENV} to open the vault", file=sys.stderr)
            return 1
        vault = CredentialVault(_path(vault_file), passphrase)

    insecure = bool(cfg.get("insecure_loopback", False))
    tls_cert = tls_key = None
    if not insecure:
        tls_cert = _path(cfg.get("tls_cert", "server-cert.pem"))
        tls_key = _path(cfg.get("tls_key", "server-key.pem"))
        if not (os.path.exists(tls_cert) and os.path.exists(tls_key)):
            host = cfg.get("listen_host", "127.0.0.1")
            fingerprint = generate_self_signed_cert(tls_cert, tls_key,
                                                    hosts=(host, "localhost", "127.0.0.1"))
            print(f"generated self-signed certificate, SHA-256 {fingerprint}")
        else:
            import hashlib
            import ssl
            der = ssl.PEM_cert_to_DER_cert(open(tls_cert).read())
            print(f"using certificate {tls_cert}, SHA-256 {hashlib.sha256(der).hexdigest()}")

    ui_dir = cfg.get("ui_dir")
    state = PortalState(
        users=users,
        descriptors=descriptors,
        vault=vault,
        portal_file=portal_file,
        relay_enabled=bool(cfg.get("relay_enabled", True)),
        ui_dir=_path(ui_dir) if ui_dir else None,
        insecure_loopback=insecure,
    )
    server = PortalServer(
        state,
        host=cfg.get("listen_host", "127.0.0.1"),
        port=int(cfg.get("listen_port", 8443)),
        tls_cert=tls_cert,
        tls_key=tls_key,
    )
    server.start()
    print(f"portal server listening on {server.url}")
    try:
        while True:
            import time
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_testbed(args) -> int:
    bed = Testbed(news_port=args.port, grades_port=args.port + 1,
                  cors=args.cors, pad=args.pad).start()
    print(f"news site:   {bed.news_origin}/news")
    print(f"grades site: {bed.grades_origin}/login  (user {bed.state.login_user!r}, pass {bed.state.login_pass!r})")
    print("mutation endpoints: POST /__mutate on either site")
    try:
        while True:
            import time
            time.sleep(3600)
    except KeyboardInterrupt:
        bed.stop()
    return 0


def cmd_add_portlet(args) -> int:
    ssl_context = ssl_context_for_ca(args.ca)
    server = args.server.rstrip("/")
    resp = fetch("POST", f"{server}/api/login",
                 body=json.dumps({"user": args.admin_user, "pass": args.admin_pass}).encode(),
                 headers={"Content-Type": "application/json"}, ssl_context=ssl_context)
    if resp.status != 200:
        print(f"admin login failed: {resp.status}", file=sys.stderr)
        return 5
    token = json.loads(resp.body)["token"]

    clip_rules = [{"kind": "select", "path": s} for s in args.select]
    clip_rules += [{"kind": "cut", "path": c} for c in args.cut]

    login_fields = {}
    for mapping in args.login_field:
        role, _, field_name = mapping.partition("=")
        if role not in ("user", "pass") or not field_name:
            print(f"bad --login-field {mapping!r}; use user=<field> or pass=<field>", file=sys.stderr)
            return 1
        login_fields[role] = field_name

    workflow = [{"step": "get", "url": args.url}]
    definition = {
        "title": args.title or args.portlet_id,
        "source_url": args.url,
        "clip_rules": clip_rules,
    }
    credentials = None
    if login_fields:
        if not (args.user and args.password and args.form_path):
            print("--login-field needs --user, --pass and --form-path", file=sys.stderr)
            return 1
        fields = {}
        if "user" in login_fields:
            fields[login_fields["user"]] = "{user}"
        if "pass" in login_fields:
            fields[login_fields["pass"]] = "{pass}"
        workflow.append({"step": "submit_form", "form_path": args.form_path, "fields": fields})
        credentials = {"username": args.user, "password": args.password}
    workflow.append({"step": "clip"})
    definition["workflow"] = workflow
    if args.refresh_interval:
        definition["refresh"] = {"interval_seconds": args.refresh_interval, "policy": "interval"}

    payload = {"definition": definition}
    if credentials is not None:
        payload["credentials"] = credentials
    resp = fetch(
        "PUT",
        f"{server}/api/admin/portal/{args.portal}/portlets/{args.portlet_id}",
        body=json.dumps(payload).encode(),
        headers={"Content-Type": "application/json", "Authorization": f"Bearer {token}"},
        ssl_context=ssl_context,
    )
    if resp.status != 200:
        print(f"add-portlet failed: {resp.status} {resp.text}", file=sys.stderr)
        return 1
    print(f"portlet {args.portlet_id!r} added; descriptor version {json.loads(resp.body)['version']}")
    return 0


def _init(args):
    return client_mod.init_session(args.server, args.portal, args.user,
                                   args.password, ca_file=args.ca)


def cmd_render(args) -> int:
    try:
        session = _init(args)
    except (client_mod.AuthError, client_mod.DescriptorError) as exc:
        print(f"init failed: {exc}", file=sys.stderr)
        return 5
    failures = 0
    for row in session.descriptor.layout:
        for pid in row:
            try:
                client_mod.run_workflow(session, pid)
            except client_mod.StepError as exc:
                failures += 1
                print(f"portlet {pid!r} failed: {exc}", file=sys.stderr)
    summary = client_mod.render_portal(session, args.out)
    print(f"rendered {summary['portlets_rendered']}/{summary['portlets_total']} portlets "
          f"to {summary['portal_file']}")
    if summary["portlets_rendered"] == 0:
        return 4
    return 4 if failures else 0


def cmd_watch(args) -> int:
    try:
        session = _init(args)
    except (client_mod.AuthError, client_mod.DescriptorError) as exc:
        print(f"init failed: {exc}", file=sys.stderr)
        return 5
    failures = 0
    for row in session.descriptor.layout:
        for pid in row:
            try:
                client_mod.run_workflow(session, pid)
            except client_mod.StepError as exc:
                failures += 1
                print(f"portlet {pid!r} failed: {exc}", file=sys.stderr)

    report_fh = open(args.report, "w", encoding="utf-8") if args.report else None

    def on_report(report):
        if report_fh is not None:
            report_fh.write(report.to_json() + "\n")
            report_fh.flush()

    try:
        reports = client_mod.watch(session, args.cycles, args.interval, on_report=on_report)
    finally:
        if report_fh is not None:
            report_fh.close()
    errors = sum(1 for r in reports if r.error)
    changed = sum(1 for r in reports if r.changed)
    per_origin = {
        origin: {"requests": c.request_count, "bytes_in": c.bytes_in, "bytes_out": c.bytes_out}
        for origin, c in sorted(session.traffic.snapshot().items())
    }
    print(json.dumps({
        "cycles": args.cycles,
        "reports": len(reports),
        "changed": changed,
        "errors": errors,
        "traffic": per_origin,
    }, indent=2))
    if args.out:
        client_mod.render_portal(session, args.out)
    return 4 if (failures or errors) else 0


if __name__ == "__main__":
    sys.exit(main())
