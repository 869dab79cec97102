from flask import Flask, request, jsonify
from flask_cors import CORS
import sys
import os
import logging

from scipy import fft

# Add current directory to path
sys.path.insert(0, os.path.dirname(__file__))

from backend.fields import discretize
from backend.orchestrator import SUITES, classify_report, run_suite
from backend.reporting import summarize_checks
from backend.snapshots import png_base64
from backend.solver import run, summarize
from backend.utils import configure_logging, get_thread_count, parse_run_config

configure_logging()
logger = logging.getLogger("plad.server")

app = Flask(__name__)
CORS(app)

app.config['DEBUG'] = os.getenv('FLASK_DEBUG', 'False') == 'True'

# Randomized suites above this size belong on the command line
MAX_VERIFY_SAMPLES = int(os.getenv('PLAD_MAX_VERIFY_SAMPLES', 200))


@app.errorhandler(Exception)
def handle_exception(e):
    # Pass through HTTP errors
    if hasattr(e, "code") and isinstance(e.code, int):
        return jsonify(status="error", error=str(e)), e.code
    if isinstance(e, ValueError):
        return jsonify(status="error", error=str(e), kind=type(e).__name__), 400
    logger.exception("Unhandled exception: %s", e)
    return jsonify(status="error", error=str(e), kind=type(e).__name__), 500


def _json_body():
    body = request.get_json(silent=True)
    if not isinstance(body, dict):
        raise ValueError("request body must be a JSON object")
    return body


def _require(body, *keys):
    missing = [k for k in keys if k not in body]
    if missing:
        raise ValueError(f"missing field(s): {', '.join(missing)}")


@app.route('/api/classify', methods=['POST'])
def classify():
    body = _json_body()
    _require(body, 'd', 'p', 'alpha', 'lambda')
    report = classify_report(int(body['d']), float(body['p']), float(body['alpha']), float(body['lambda']))
    return jsonify(report)


@app.route('/api/verify', methods=['POST'])
def verify():
    body = _json_body()
    suite = body.get('suite')
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    samples = int(body.get('samples', 20))
    if not 1 <= samples <= MAX_VERIFY_SAMPLES:
        raise ValueError(f"samples must lie in [1, {MAX_VERIFY_SAMPLES}]")
    with fft.set_workers(get_thread_count()):
        results = run_suite(suite, samples=samples, seed=int(body.get('seed', 7)))
    verdict = summarize_checks(results)
    return jsonify({
        'status': verdict['status'],
        'suite': suite,
        'verdict': verdict,
        'results': [
            {'field_id': r.field_id, 'check': r.check, 'lhs': r.lhs, 'rhs': r.rhs, 'ratio': r.ratio,
             'pass': r.passed}
            for r in results
        ],
    })


@app.route('/api/simulate', methods=['POST'])
def simulate():
    run_config = parse_run_config(_json_body())
    logger.info("Starting simulation...")
    with fft.set_workers(get_thread_count()):
        trajectory = run(discretize(run_config.initial, run_config.solver.grid), run_config.solver)
    logger.info("Simulation complete")
    summary = summarize(trajectory)
    return jsonify({
        'status': 'success',
        'summary': summary,
        'final_png_b64': png_base64(trajectory.final),
    })


@app.route('/health', methods=['GET'])
def health_check():
    """Health check endpoint for monitoring"""
    return jsonify({'status': 'healthy', 'app': 'plad-lab'}), 200


if __name__ == '__main__':
    port = int(os.getenv('PORT', 5000))
    logger.info("Starting PLAD laboratory server on port %d", port)

    debug_mode = os.getenv('FLASK_DEBUG', 'False') == 'True'
    app.run(debug=debug_mode, host='0.0.0.0', port=port)
