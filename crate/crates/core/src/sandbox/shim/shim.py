# BloClaw worker shim.
#
# Loaded by the instrumented-script header into a private module named
# `_bloclaw_shim`. It overrides display calls of matplotlib and plotly,
# sweeps the script namespace for figures nobody saved, and frames every
# capture as one sentinel line on the real stdout:
#
#   @@BLOCLAW_ARTIFACT@@ {"seq":1,"kind":"...","origin":"...","payload":"..."}
#
# It also hosts the builtin probes (depict_2d, embed_3d_ligand, pdf_probe,
# table_probe) which the supervisor requests through argv.

import atexit
import base64
import io
import json
import os
import sys

SENTINEL = "@@BLOCLAW_ARTIFACT@@ "
PROBE_FLAG = "--bloclaw-probe"
PREVIEW_ROWS = 20

_out = sys.__stdout__
_seq = 0
_ledger = []
_ledger_ids = set()
_installed = False
_finished = False
_globals = None
_workspace = None
_writable = []
_debug = bool(os.environ.get("BLOCLAW_DEBUG"))


def _debug_note(msg):
    if _debug:
        sys.__stderr__.write("[bloclaw-shim] %s\n" % msg)


def emit(kind, origin, payload):
    global _seq
    try:
        sys.stdout.flush()
    except Exception:
        pass
    _seq += 1
    record = {"seq": _seq, "kind": kind, "origin": origin, "payload": payload}
    _out.write(SENTINEL + json.dumps(record, separators=(",", ":")) + "\n")
    _out.flush()


def _captured(obj):
    return id(obj) in _ledger_ids


def _mark(obj):
    # Holding a reference keeps id() from being reused by a later figure.
    _ledger.append(obj)
    _ledger_ids.add(id(obj))


# ---------------------------------------------------------------- matplotlib

_mpl_savefig = None


def _mpl_png_b64(fig):
    buf = io.BytesIO()
    saver = _mpl_savefig or type(fig).savefig
    saver(fig, buf, format="png", dpi=100, bbox_inches="tight")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _emit_mpl(fig, origin):
    if _captured(fig):
        return
    _mark(fig)
    try:
        emit("raster_image_b64", origin, _mpl_png_b64(fig))
    except Exception as exc:
        emit("error_record", origin, "matplotlib figure serialization failed: %r" % (exc,))


def _mpl_open_figures():
    helpers = sys.modules.get("matplotlib._pylab_helpers")
    if helpers is None:
        return []
    return [m.canvas.figure for m in helpers.Gcf.get_all_fig_managers()]


def _patch_pyplot(plt):
    if getattr(plt.show, "_bloclaw", False):
        return

    def show(*args, **kwargs):
        for fig in _mpl_open_figures():
            _emit_mpl(fig, "intercepted_show")
        plt.close("all")

    show._bloclaw = True
    plt.show = show


def _patch_mpl_figure(figure_mod):
    global _mpl_savefig
    Figure = figure_mod.Figure
    if getattr(Figure.savefig, "_bloclaw", False):
        return
    _mpl_savefig = Figure.savefig

    def savefig(self, fname, *args, **kwargs):
        result = _mpl_savefig(self, fname, *args, **kwargs)
        if not isinstance(fname, io.IOBase):
            _emit_mpl(self, "explicit_save")
        return result

    def fig_show(self, *args, **kwargs):
        _emit_mpl(self, "intercepted_show")

    savefig._bloclaw = True
    fig_show._bloclaw = True
    Figure.savefig = savefig
    Figure.show = fig_show


# -------------------------------------------------------------------- plotly

def _plotly_html(fig):
    return fig.to_html(include_plotlyjs=True, full_html=True)


def _emit_plotly(fig, origin):
    if _captured(fig):
        return
    _mark(fig)
    try:
        emit("interactive_html", origin, _plotly_html(fig))
    except Exception as exc:
        emit("error_record", origin, "plotly figure serialization failed: %r" % (exc,))


def _patch_plotly_base(base_mod):
    BaseFigure = base_mod.BaseFigure
    if getattr(BaseFigure.show, "_bloclaw", False):
        return
    original_write_html = BaseFigure.write_html

    def show(self, *args, **kwargs):
        _emit_plotly(self, "intercepted_show")

    def write_html(self, *args, **kwargs):
        result = original_write_html(self, *args, **kwargs)
        _emit_plotly(self, "explicit_save")
        return result

    show._bloclaw = True
    BaseFigure.show = show
    BaseFigure.write_html = write_html


def _patch_plotly_io(pio):
    if getattr(pio.show, "_bloclaw", False):
        return

    def show(fig, *args, **kwargs):
        base = sys.modules.get("plotly.basedatatypes")
        if base is not None and not isinstance(fig, base.BaseFigure):
            try:
                import plotly.graph_objects as go
                fig = go.Figure(fig)
            except Exception:
                return
        _emit_plotly(fig, "intercepted_show")

    show._bloclaw = True
    pio.show = show


def _finish_before(_module):
    # matplotlib registers Gcf.destroy_all at exit; handlers run last-in
    # first-out, so the sweep is moved behind it to run before it.
    atexit.unregister(finish)
    atexit.register(finish)


# -------------------------------------------------------------- import hooks

_POST_IMPORT = {
    "matplotlib._pylab_helpers": _finish_before,
    "matplotlib.pyplot": _patch_pyplot,
    "matplotlib.figure": _patch_mpl_figure,
    "plotly.basedatatypes": _patch_plotly_base,
    "plotly.io": _patch_plotly_io,
}


class _HookedLoader:
    def __init__(self, loader, hook):
        self._loader = loader
        self._hook = hook

    def __getattr__(self, name):
        return getattr(self._loader, name)

    def create_module(self, spec):
        return self._loader.create_module(spec)

    def exec_module(self, module):
        self._loader.exec_module(module)
        try:
            self._hook(module)
        except Exception as exc:
            _debug_note("post-import hook for %s failed: %r" % (module.__name__, exc))


class _PostImportFinder:
    def find_spec(self, name, path=None, target=None):
        hook = _POST_IMPORT.get(name)
        if hook is None:
            return None
        for finder in sys.meta_path:
            if finder is self or not hasattr(finder, "find_spec"):
                continue
            spec = finder.find_spec(name, path, target)
            if spec is not None:
                break
        else:
            return None
        if spec.loader is not None and hasattr(spec.loader, "exec_module"):
            spec.loader = _HookedLoader(spec.loader, hook)
        return spec


# ----------------------------------------------------------------- isolation

def _inside(path, roots):
    for root in roots:
        if path == root or path.startswith(root.rstrip(os.sep) + os.sep):
            return True
    return False


def _resolve(path):
    if isinstance(path, int):
        return None
    if isinstance(path, bytes):
        path = os.fsdecode(path)
    path = os.fspath(path)
    return os.path.realpath(path)


_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_APPEND | os.O_TRUNC
_MUTATING_EVENTS = {
    "os.remove": (0,),
    "os.rmdir": (0,),
    "os.mkdir": (0,),
    "os.rename": (0, 1),
    "os.link": (0, 1),
    "os.symlink": (1,),
    "os.truncate": (0,),
    "os.chmod": (0,),
    "os.chown": (0,),
    "os.utime": (0,),
    "shutil.rmtree": (0,),
    "shutil.copyfile": (1,),
    "shutil.move": (1,),
}
_PROCESS_EVENTS = {"os.system", "subprocess.Popen", "os.exec", "os.posix_spawn", "os.spawn", "pty.spawn"}


def _guard_write(path):
    resolved = _resolve(path)
    if resolved is None or _inside(resolved, _writable):
        return
    raise PermissionError("sandbox: write outside workspace denied: %s" % resolved)


def _audit(event, args):
    if event == "open":
        path, mode, flags = args
        writing = (mode is not None and any(c in mode for c in "wax+")) or (
            mode is None and isinstance(flags, int) and flags & _WRITE_FLAGS
        )
        if writing:
            _guard_write(path)
    elif event in _MUTATING_EVENTS:
        for idx in _MUTATING_EVENTS[event]:
            if idx < len(args) and args[idx] is not None and not isinstance(args[idx], int):
                _guard_write(args[idx])
    elif event in _PROCESS_EVENTS:
        raise PermissionError("sandbox: process spawning is disabled (%s)" % event)
    elif event == "socket.connect" and not _network:
        sock, address = args
        if getattr(sock, "family", None) != getattr(__import__("socket"), "AF_UNIX", None):
            raise PermissionError("sandbox: network access is disabled")
    elif event == "socket.getaddrinfo" and not _network:
        raise PermissionError("sandbox: network access is disabled")


_network = os.environ.get("BLOCLAW_NETWORK") == "1"


# ------------------------------------------------------------------ lifecycle

def install(user_globals):
    global _installed, _globals, _workspace, _writable
    _globals = user_globals
    if _installed:
        return
    _installed = True
    os.environ["MPLBACKEND"] = "Agg"
    _workspace = os.path.realpath(os.environ.get("BLOCLAW_WORKSPACE") or os.getcwd())
    _writable = [_workspace, "/dev/null"]
    for extra in filter(None, os.environ.get("BLOCLAW_WRITABLE", "").split(os.pathsep)):
        _writable.append(os.path.realpath(extra))
    sys.meta_path.insert(0, _PostImportFinder())
    for name, hook in _POST_IMPORT.items():
        module = sys.modules.get(name)
        if module is not None:
            hook(module)
    atexit.register(finish)
    sys.addaudithook(_audit)


def _swept_values(namespace):
    for name, value in list(namespace.items()):
        if name.startswith("_bloclaw") or name.startswith("__"):
            continue
        yield value
        if isinstance(value, (list, tuple)):
            for item in value:
                yield item
        elif isinstance(value, dict):
            for item in list(value.values()):
                yield item


def sweep(namespace):
    figure_mod = sys.modules.get("matplotlib.figure")
    plotly_base = sys.modules.get("plotly.basedatatypes")
    for fig in _mpl_open_figures():
        _emit_mpl(fig, "namespace_sweep")
    if namespace is None or (figure_mod is None and plotly_base is None):
        return
    for value in _swept_values(namespace):
        try:
            if figure_mod is not None and isinstance(value, figure_mod.Figure):
                _emit_mpl(value, "namespace_sweep")
            elif plotly_base is not None and isinstance(value, plotly_base.BaseFigure):
                _emit_plotly(value, "namespace_sweep")
        except Exception as exc:
            emit("error_record", "namespace_sweep", "sweep failed: %r" % (exc,))


def finish(user_globals=None):
    global _finished
    if _finished:
        return
    _finished = True
    namespace = user_globals if user_globals is not None else _globals
    if PROBE_FLAG in sys.argv:
        idx = sys.argv.index(PROBE_FLAG)
        name = sys.argv[idx + 1] if idx + 1 < len(sys.argv) else ""
        raw_args = sys.argv[idx + 2] if idx + 2 < len(sys.argv) else "{}"
        run_builtin_probe(name, raw_args)
    sweep(namespace)
    try:
        sys.stdout.flush()
    except Exception:
        pass


# --------------------------------------------------------------------- probes

def _probe_depict_2d(args):
    from rdkit import Chem
    from rdkit.Chem import Draw

    smiles = args.get("smiles", "")
    mol = Chem.MolFromSmiles(smiles)
    if mol is None:
        raise ValueError("SMILES parse failure: %r" % (smiles,))
    image = Draw.MolToImage(mol, size=(int(args.get("width", 600)), int(args.get("height", 450))))
    buf = io.BytesIO()
    image.save(buf, format="PNG")
    emit("raster_image_b64", "probe", base64.b64encode(buf.getvalue()).decode("ascii"))


def _probe_embed_3d_ligand(args):
    from rdkit import Chem
    from rdkit.Chem import AllChem

    smiles = args.get("smiles", "")
    mol = Chem.MolFromSmiles(smiles)
    if mol is None:
        raise ValueError("SMILES parse failure: %r" % (smiles,))
    mol = Chem.AddHs(mol)
    params = AllChem.ETKDGv3()
    params.randomSeed = int(args.get("seed", 42))
    if AllChem.EmbedMolecule(mol, params) != 0:
        raise ValueError("3D embedding failed for %r" % (smiles,))
    AllChem.MMFFOptimizeMolecule(mol)
    emit("text", "probe", Chem.MolToPDBBlock(mol))


def _probe_pdf(args):
    from pypdf import PdfReader

    reader = PdfReader(args["path"])
    pages = int(args.get("max_pages", 3))
    parts = []
    for page in reader.pages[:pages]:
        parts.append(page.extract_text() or "")
    text = "\n".join(parts).strip()
    if not text:
        raise ValueError("no extractable text in first %d pages" % pages)
    emit("text", "probe", text)


def _probe_table(args):
    import pandas as pd

    path = args["path"]
    lower = path.lower()
    if lower.endswith((".xlsx", ".xls")):
        frame = pd.read_excel(path)
    else:
        frame = pd.read_csv(path, sep="\t" if lower.endswith(".tsv") else ",")
    lines = ["rows: %d" % len(frame), "columns: %s" % ", ".join(map(str, frame.columns))]
    lines.append("types: %s" % ", ".join("%s=%s" % (c, t) for c, t in frame.dtypes.astype(str).items()))
    lines.append(frame.head(PREVIEW_ROWS).to_csv(index=False).strip())
    emit("text", "probe", "\n".join(lines))


_PROBES = {
    "depict_2d": _probe_depict_2d,
    "embed_3d_ligand": _probe_embed_3d_ligand,
    "pdf_probe": _probe_pdf,
    "table_probe": _probe_table,
}


def run_builtin_probe(name, raw_args):
    probe = _PROBES.get(name)
    if probe is None:
        emit("error_record", "probe", "unknown probe %r" % (name,))
        return
    try:
        args = json.loads(raw_args) if isinstance(raw_args, str) else dict(raw_args)
        probe(args)
    except Exception as exc:
        emit("error_record", "probe", "%s failed: %s: %s" % (name, type(exc).__name__, exc))
