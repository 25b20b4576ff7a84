from flask import Flask
from config import Config, SECTIONS, merge_section
from errors import ConfigError
import copy
import json
import logging
from logging.handlers import RotatingFileHandler
import os


def create_app(config_class=Config, test_config=None):
    """
    应用工厂。

    默认配置来自 config_class；PCMP_CONFIG 指向的 JSON 文件和 test_config
    按配置段逐键覆盖默认值。
    """
    app = Flask(__name__, instance_relative_config=True)
    app.config.from_object(config_class)
    defaults = {name: app.config[name] for name in SECTIONS}

    # 创建实例文件夹
    try:
        os.makedirs(app.instance_path)
    except OSError:
        pass

    run_config = app.config.get('RUN_CONFIG_FILE')
    if run_config:
        try:
            app.config.from_file(run_config, load=json.load)
        except OSError as e:
            raise ConfigError(f"无法读取运行配置文件 {run_config}: {e}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"运行配置文件不是合法 JSON: {run_config} ({e})")
    if test_config:
        app.config.update(test_config)
    for name in SECTIONS:
        overrides = app.config[name] if app.config[name] is not defaults[name] else None
        app.config[name] = copy.deepcopy(merge_section(defaults[name], overrides, name))

    # 配置日志
    log_file = app.config['LOG_FILE']
    os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
    handler = RotatingFileHandler(log_file, maxBytes=app.config['LOG_MAX_BYTES'],
                                  backupCount=app.config['LOG_BACKUP_COUNT'], encoding='utf-8')
    handler.setLevel(logging.INFO)
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    handler.setFormatter(formatter)
    handler.pcmp_handler = True

    # 各业务模块通过 logging.getLogger(__name__) 写到同一个文件；重复创建应用时替换旧的处理器
    root = logging.getLogger()
    for logger in (app.logger, root):
        for old in [h for h in logger.handlers if getattr(h, "pcmp_handler", False)]:
            logger.removeHandler(old)
            old.close()
        logger.addHandler(handler)
        logger.setLevel(logging.INFO)
    app.logger.propagate = False

    from app.commands import pcmp_bp
    app.register_blueprint(pcmp_bp)

    return app
