"""
Storage service for run artifacts on R2 (disabled unless R2_ENABLED)
"""
import asyncio
import logging
import os
from datetime import datetime
from typing import Dict, List, Optional

from config import Config

logger = logging.getLogger(__name__)


class StorageService:
    """
    Uploads dumps, tables and images of a run to Cloudflare R2
    Disabled by default - enable via R2_ENABLED env variable
    """

    def __init__(self):
        self.enabled = Config.R2_ENABLED

        if self.enabled:
            try:
                import boto3
                from botocore.config import Config as BotoConfig

                # S3-compatible API
                self.client = boto3.client(
                    's3',
                    endpoint_url=f'https://{Config.R2_ACCOUNT_ID}.r2.cloudflarestorage.com',
                    aws_access_key_id=Config.R2_ACCESS_KEY_ID,
                    aws_secret_access_key=Config.R2_SECRET_ACCESS_KEY,
                    config=BotoConfig(signature_version='s3v4', region_name='auto'),
                )
                self.bucket_name = Config.R2_BUCKET_NAME
                self.custom_domain = Config.R2_CUSTOM_DOMAIN
                logger.info("R2 storage service initialized")
            except ImportError:
                logger.warning("boto3 not installed - R2 storage disabled")
                self.enabled = False
            except Exception as e:
                logger.error(f"Failed to initialize R2 client: {str(e)}")
                self.enabled = False
        else:
            logger.info("R2 storage service is disabled")

    def get_run_path(self, run_id: str, filename: str) -> str:
        """
        Object key for an artifact of a run

        Returns:
            Path like: honeycomb/2026-10/evolve-1a2b3c/alpha_final.hny
        """
        month = datetime.now().strftime('%Y-%m')
        return f"{Config.R2_PREFIX}/{month}/{run_id}/{filename}"

    def get_public_url(self, object_name: str) -> Optional[str]:
        if not self.enabled:
            return None
        if self.custom_domain:
            return f"https://{self.custom_domain}/{object_name}"
        return f"https://{self.bucket_name}.r2.dev/{object_name}"

    async def upload_file(self, file_path: str, object_name: Optional[str] = None, run_id: Optional[str] = None) -> Optional[str]:
        """
        Upload one file

        Args:
            file_path: Local path to file
            object_name: Object key (if None, derived from run_id and the file name)
            run_id: Run identifier used for the derived key

        Returns:
            Public URL of the uploaded file, or None if disabled or failed
        """
        if not self.enabled:
            logger.debug("R2 upload skipped - service disabled")
            return None

        if object_name is None:
            filename = os.path.basename(file_path)
            object_name = self.get_run_path(run_id, filename) if run_id else filename

        try:
            await asyncio.to_thread(self.client.upload_file, file_path, self.bucket_name, object_name)
            logger.info(f"Uploaded artifact to R2: {object_name}")
            return self.get_public_url(object_name)
        except Exception as e:
            logger.error(f"Failed to upload to R2: {str(e)}")
            return None

    async def upload_artifacts(self, paths: List[str], run_id: str) -> Dict[str, str]:
        """Upload all artifacts of a run concurrently; returns {filename: url} for the successful ones."""
        if not self.enabled or not paths:
            return {}
        urls = await asyncio.gather(*[self.upload_file(p, run_id=run_id) for p in paths])
        return {os.path.basename(p): url for p, url in zip(paths, urls) if url}
