"""
WSGI entry point for production deployment
gunicorn wsgi:app --workers 2 --timeout 600

Simulations run inside the request, so keep the worker timeout above the
longest configuration you intend to serve.
"""

import logging

from dotenv import load_dotenv

load_dotenv()

from backend.utils import configure_logging, get_thread_count  # noqa: E402
from server import app  # noqa: E402

configure_logging()
logging.getLogger("plad.wsgi").info("PLAD laboratory ready (PLAD_THREADS=%d)", get_thread_count())

if __name__ == "__main__":
    app.run()
