from flask.cli import FlaskGroup

from app import create_app

cli = FlaskGroup(create_app=create_app, add_default_commands=False, add_version_option=False,
                 help='PCMP 运动预测工具：gen-data / train / calibrate / eval / sweep-wheelbase / predict')

if __name__ == '__main__':
    cli()
