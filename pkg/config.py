import os
from dotenv import load_dotenv

load_dotenv()

class Config:
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_DIR = os.environ.get('LOG_DIR', 'logs')
    LOG_CONFIG_FILE = os.environ.get('LOG_CONFIG_FILE', 'logging_config.yaml')
    OUTPUT_DIR = os.environ.get('OUTPUT_DIR', 'out')
    DEFAULT_SCENARIO = os.environ.get('DEFAULT_SCENARIO', 'scenarios/default.yaml')
    BATCH_WORKERS = int(os.environ.get('BATCH_WORKERS', 1))

class DevelopmentConfig(Config):
    DEBUG = True
    TESTING = False

class ProductionConfig(Config):
    DEBUG = False
    TESTING = False

class TestingConfig(Config):
    DEBUG = True
    TESTING = True
    # pas de fichiers de log pendant les tests
    LOG_CONFIG_FILE = ''
    LOG_LEVEL = 'WARNING'

config_by_name = {
    'dev': DevelopmentConfig,
    'prod': ProductionConfig,
    'test': TestingConfig
}

def get_config(config_name=None):
    env = config_name or os.environ.get('TOPOCON_ENV', 'dev')
    if env not in config_by_name:
        raise KeyError(f"Environnement inconnu: {env}")
    return config_by_name[env]
