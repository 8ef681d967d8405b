import logging

from flask import Flask

from config import config


def create_app(config_name="default"):
    app = Flask(__name__)
    app.config.from_object(config[config_name])

    # library modules log under "fgel.*"; commands log through app.logger
    level = app.config["LOG_LEVEL"]
    logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger("fgel").setLevel(level)
    app.logger.setLevel(level)

    from fgel.routes.estimate import estimate_bp
    from fgel.routes.experiment import experiment_bp
    from fgel.routes.verify import verify_bp

    app.register_blueprint(estimate_bp, url_prefix="/api")
    app.register_blueprint(experiment_bp, url_prefix="/api")
    app.register_blueprint(verify_bp, url_prefix="/api")

    return app
